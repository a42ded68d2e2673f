#include "wost/wost.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>

namespace wost {

const char* sampler_mode_name(SamplerMode mode) {
  switch (mode) {
    case SamplerMode::Uniform: return "uniform";
    case SamplerMode::GuidingOnly: return "guiding_only";
    case SamplerMode::FixedMis: return "fixed_mis";
    case SamplerMode::LearnableMis: return "learnable_mis";
  }
  return "?";
}

SamplerMode parse_sampler_mode(const std::string& name) {
  if (name == "uniform") return SamplerMode::Uniform;
  if (name == "guiding_only") return SamplerMode::GuidingOnly;
  if (name == "fixed_mis") return SamplerMode::FixedMis;
  if (name == "learnable_mis") return SamplerMode::LearnableMis;
  throw std::invalid_argument("unknown sampler mode '" + name + "'");
}

double greens_ball(double r, double R, int dim) {
  if (r <= 0.0) return kInf;
  if (dim == 2) return std::log(R / r) / kTwoPi;
  return (1.0 / r - 1.0 / R) / kFourPi;
}

double greens_ball_mass(double R, int dim) {
  return dim == 2 ? R * R / 4.0 : R * R / 6.0;
}

double sample_greens_radius(double u, double R, int dim) {
  if (u <= 0.0) return 0.0;
  if (u >= 1.0) return R;
  // normalized radius s solves the closed-form CDF; both CDFs are strictly
  // increasing so Newton with a bisection guard converges fast
  double lo = 0.0, hi = 1.0;
  double s = std::sqrt(u);
  for (int it = 0; it < 100; ++it) {
    double f, df;
    if (dim == 2) {
      f = s * s * (1.0 - 2.0 * std::log(s)) - u;
      df = -4.0 * s * std::log(s);
    } else {
      f = s * s * (3.0 - 2.0 * s) - u;
      df = 6.0 * s * (1.0 - s);
    }
    if (f > 0.0)
      hi = s;
    else
      lo = s;
    if (std::abs(f) < 1e-10) break;
    double step = df > 0.0 ? f / df : 0.0;
    double next = s - step;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (next == s) break;
    s = next;
  }
  return s * R;
}

SourceSample sample_source_point(Rng& rng, Vec2 x, double R, const Accel& accel,
                                 const Vec2* n) {
  Vec3 n3;
  const Vec3* np = nullptr;
  if (n) {
    n3 = to3(*n);
    np = &n3;
  }
  Vec3 dir = uniform_dir_sample(rng, np, 2);
  double r = sample_greens_radius(rng.uniform(), R, 2);

  SourceSample out;
  Vec2 d2 = to2(dir);
  out.y = x + r * d2;
  // y must be visible from x within the star region; the hemisphere density
  // doubling on Neumann boundaries cancels the alpha = 1/2 factor exactly,
  // so the unoccluded weight is the Green's mass in both cases.
  auto hit = accel.ray_first_hit(x, d2, r, kAllKinds);
  out.weight = hit ? 0.0 : greens_ball_mass(R, 2);
  return out;
}

double sample_neumann_contrib(Rng& rng, Vec2 x, double R, const Accel& accel,
                              const Scene& scene, const Vec2* n,
                              int exclude_segment, bool clamp_grazing,
                              double grazing_floor) {
  Vec3 n3;
  const Vec3* np = nullptr;
  if (n) {
    n3 = to3(*n);
    np = &n3;
  }
  Vec3 dir = uniform_dir_sample(rng, np, 2);
  Vec2 d2 = to2(dir);
  auto hit = accel.ray_first_hit(x, d2, R, kNeumannMask, exclude_segment);
  if (!hit) return 0.0;
  double h = scene.eval_neumann(hit->point, hit->segment);
  if (h == 0.0) return 0.0;
  double cos_z = std::abs(dot(d2, hit->normal));
  if (clamp_grazing) cos_z = std::max(cos_z, grazing_floor);
  if (cos_z == 0.0) return 0.0;  // exactly grazing: measure zero
  return greens_ball(hit->t, R, 2) * h * hit->t * kTwoPi / cos_z;
}

bool decode_guiding(const StepContext& ctx, Vec2 position, MixtureParams* out) {
  if (!ctx.guided()) return false;
  assert(ctx.field && "guided sampler modes need a guiding field");
  UnnormParams raw = ctx.field->eval_params(position);
  *out = normalize_params(raw);
  switch (ctx.cfg.mode) {
    case SamplerMode::GuidingOnly: out->c = 1.0; break;
    case SamplerMode::FixedMis: out->c = ctx.cfg.fixed_c; break;
    default: break;  // LearnableMis keeps the decoded c
  }
  return true;
}

DirectionSample sample_next_direction(const StepContext& ctx, WalkState& walk,
                                      const MixtureParams* params) {
  Vec3 n3 = to3(walk.normal);
  const Vec3* np = walk.on_neumann ? &n3 : nullptr;

  DirectionSample out;
  if (!params) {
    out.nu = uniform_dir_sample(walk.rng, np, 2);
    out.pdf_u = uniform_dir_pdf(out.nu, np, 2);
    out.pdf_mis = out.pdf_u;
    out.pdf_g = 0.0;
    out.c = 0.0;
    return out;
  }
  MisSample ms =
      mis_sample(walk.rng, *params, np, ctx.cfg.reflect_at_neumann);
  out.nu = ms.nu;
  out.pdf_mis = ms.pdf_mis;
  out.pdf_g = ms.pdf_g;
  out.pdf_u = ms.pdf_u;
  out.c = params->c;
  return out;
}

bool begin_step(const StepContext& ctx, WalkState& walk) {
  if (!walk.alive) return false;
  const Scene& scene = *ctx.scene;
  const Accel& accel = *ctx.accel;

  // Dirichlet epsilon-shell termination
  ClosestPoint cd = accel.closest_point(walk.position, kDirichletMask);
  if (cd.segment >= 0 && cd.dist <= ctx.epsilon()) {
    double g = scene.eval_dirichlet(cd.point, cd.segment);
    walk.accum += walk.throughput * g;
    walk.trace.terminal_value = g;
    walk.alive = false;
    return false;
  }

  if (walk.depth >= ctx.cfg.max_steps) {
    walk.alive = false;
    walk.escaped = true;
    return false;
  }

  // Russian roulette on long walks, survival min(1, |throughput|)
  double rr_factor = 1.0;
  if (walk.depth > ctx.cfg.rr_depth) {
    double q = std::min(1.0, std::abs(walk.throughput));
    if (q <= 0.0 || walk.rng.uniform() >= q) {
      walk.trace.terminal_value = 0.0;
      walk.alive = false;
      return false;
    }
    walk.throughput /= q;
    rr_factor = 1.0 / q;
  }

  double dist_sil = accel.closest_silhouette(walk.position);
  double dist_d = cd.segment >= 0 ? cd.dist : kInf;
  if (dist_d == kInf && dist_sil == kInf)
    throw SceneError("walk: unbounded star region (no Dirichlet boundary "
                     "and no Neumann silhouette)");
  double radius = std::min(dist_d, std::max(dist_sil, ctx.r_min()));
  walk.step_radius = radius;

  const Vec2* n = walk.on_neumann ? &walk.normal : nullptr;
  double contrib = 0.0;
  if (!scene.source.is_zero()) {
    SourceSample ss =
        sample_source_point(walk.rng, walk.position, radius, accel, n);
    if (ss.weight != 0.0) contrib -= ss.weight * scene.eval_source(ss.y);
  }
  // analytically-zero flux terms are skipped; the estimate is unchanged
  if (ctx.neumann_flux) {
    contrib += sample_neumann_contrib(walk.rng, walk.position, radius, accel,
                                      scene, n, walk.segment,
                                      ctx.cfg.clamp_grazing,
                                      ctx.cfg.grazing_floor);
  }
  walk.accum += walk.throughput * contrib;

  if (walk.collect_trace) {
    TraceStep step;
    step.x = walk.position;
    step.on_neumann = walk.on_neumann;
    step.normal = walk.normal;
    step.local_contrib = contrib;
    step.rr_factor = rr_factor;
    walk.trace.steps.push_back(step);
  }
  return true;
}

void finish_step(const StepContext& ctx, WalkState& walk,
                 const MixtureParams* params) {
  DirectionSample ds = sample_next_direction(ctx, walk, params);
  // direction-parameterized recursive weight; uniform sampling keeps the
  // throughput at exactly 1
  double multiplier = params ? ds.pdf_u / ds.pdf_mis : 1.0;

  if (walk.collect_trace) {
    TraceStep& step = walk.trace.steps.back();
    step.nu = ds.nu;
    step.pdf_mis = ds.pdf_mis;
    step.pdf_g = ds.pdf_g;
    step.pdf_u = ds.pdf_u;
    step.c = ds.c;
    step.multiplier = multiplier;
  }

  if (multiplier == 0.0) {
    // sampled into the invalid half space (reflection disabled): the
    // recursive term contributes nothing beyond this point
    walk.trace.terminal_value = 0.0;
    walk.alive = false;
    return;
  }

  Vec2 d2 = to2(ds.nu);
  auto hit = ctx.accel->ray_first_hit(walk.position, d2, walk.step_radius,
                                      kNeumannMask, walk.segment);
  if (hit) {
    walk.position = hit->point;
    walk.on_neumann = true;
    walk.normal = hit->normal;
    walk.segment = hit->segment;
  } else {
    walk.position = walk.position + walk.step_radius * d2;
    walk.on_neumann = false;
    walk.segment = -1;
  }
  if (params) walk.throughput *= multiplier;
  ++walk.depth;

  if (!ctx.scene->bbox.contains(walk.position,
                                1e-9 * ctx.scene->bbox.diagonal())) {
    walk.alive = false;
    walk.escaped = true;
  }
}

void wost_step(const StepContext& ctx, WalkState& walk) {
  if (!begin_step(ctx, walk)) return;
  MixtureParams params;
  const MixtureParams* pp =
      decode_guiding(ctx, walk.position, &params) ? &params : nullptr;
  finish_step(ctx, walk, pp);
}

WalkResult wost_walk(const StepContext& ctx, Vec2 x0, Rng rng,
                     std::vector<GuideRecord>* records) {
  WalkState walk;
  walk.position = x0;
  walk.rng = rng;
  walk.collect_trace = records != nullptr;
  while (walk.alive) wost_step(ctx, walk);

  WalkResult out;
  out.escaped = walk.escaped;
  out.estimate = walk.escaped ? 0.0 : walk.accum;
  if (records && !walk.escaped)
    backfill_targets_append(walk.trace, *records);
  return out;
}

void solve_batch(const StepContext& ctx, std::span<const Vec2> points,
                 std::span<PointStats> stats, uint64_t seed, uint64_t wpp_index,
                 bool collect_records, std::vector<GuideRecord>* records,
                 SolveScratch* scratch) {
  assert(points.size() == stats.size());
  const size_t n = points.size();
  SolveScratch local;
  SolveScratch& s = scratch ? *scratch : local;

  s.walks.resize(n);
  for (size_t i = 0; i < n; ++i) {
    WalkState& w = s.walks[i];
    w.position = points[i];
    w.on_neumann = false;
    w.segment = -1;
    w.throughput = 1.0;
    w.accum = 0.0;
    w.depth = 0;
    w.rng = Rng::for_walk(seed, i, wpp_index);
    w.alive = true;
    w.escaped = false;
    w.trace.clear();  // keeps capacity across batches
    w.collect_trace = collect_records;
  }
  std::vector<WalkState>& walks = s.walks;

  std::vector<uint32_t>& alive = s.alive;
  alive.resize(n);
  for (size_t i = 0; i < n; ++i) alive[i] = static_cast<uint32_t>(i);
  std::vector<uint32_t>& need = s.need;
  s.needs_dir.resize(n);
  std::vector<char>& needs_dir = s.needs_dir;
  std::vector<Vec2>& positions = s.positions;
  std::vector<double>& raw_out = s.raw_out;
  std::vector<MixtureParams>& decoded = s.decoded;

  const bool guided = ctx.guided();
  const int od = guided ? ctx.field->config().output_dim() : 0;

  while (!alive.empty()) {
    // logic + evaluation stages
#pragma omp parallel for schedule(dynamic, 64)
    for (long j = 0; j < static_cast<long>(alive.size()); ++j)
      needs_dir[alive[j]] = begin_step(ctx, walks[alive[j]]) ? 1 : 0;

    need.clear();
    for (uint32_t idx : alive)
      if (needs_dir[idx]) need.push_back(idx);
    if (need.empty()) break;

    // guiding decode for the whole wavefront in one batched call
    if (guided) {
      positions.resize(need.size());
      for (size_t j = 0; j < need.size(); ++j)
        positions[j] = walks[need[j]].position;
      raw_out.resize(need.size() * od);
      ctx.field->eval_batch(positions, raw_out.data());
      decoded.resize(need.size());
#pragma omp parallel for schedule(static)
      for (long j = 0; j < static_cast<long>(need.size()); ++j) {
        UnnormParams raw =
            unpack_params(raw_out.data() + static_cast<size_t>(j) * od,
                          ctx.field->config().mixture_k,
                          ctx.field->config().mixture_dim);
        decoded[j] = normalize_params(raw);
        switch (ctx.cfg.mode) {
          case SamplerMode::GuidingOnly: decoded[j].c = 1.0; break;
          case SamplerMode::FixedMis: decoded[j].c = ctx.cfg.fixed_c; break;
          default: break;
        }
      }
    }

    // walk stage
#pragma omp parallel for schedule(dynamic, 64)
    for (long j = 0; j < static_cast<long>(need.size()); ++j)
      finish_step(ctx, walks[need[j]], guided ? &decoded[j] : nullptr);

    alive.clear();
    for (uint32_t idx : need)
      if (walks[idx].alive) alive.push_back(idx);
  }

  for (size_t i = 0; i < n; ++i) {
    WalkState& w = walks[i];
    if (w.escaped) {
      stats[i].push(0.0);
      ++stats[i].escaped;
      continue;
    }
    stats[i].push(w.accum);
    if (collect_records && records)
      backfill_targets_append(w.trace, *records);
  }
}

}  // namespace wost
