#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "wost/geom2d.hpp"
#include "wost/guide_field.hpp"
#include "wost/guide_train.hpp"
#include "wost/rng.hpp"
#include "wost/scene.hpp"

namespace wost {

enum class SamplerMode { Uniform, GuidingOnly, FixedMis, LearnableMis };

const char* sampler_mode_name(SamplerMode mode);
SamplerMode parse_sampler_mode(const std::string& name);

struct SolverConfig {
  double epsilon_shell = 0.0;  // 0 -> take the scene's value
  double r_min = 0.0;          // 0 -> epsilon_shell
  int rr_depth = 128;
  SamplerMode mode = SamplerMode::Uniform;
  double fixed_c = 0.5;
  bool reflect_at_neumann = true;
  bool clamp_grazing = false;
  double grazing_floor = 1e-3;
  // hard safety cap; capped walks are counted as escaped
  int max_steps = 1 << 16;
};

struct StepContext {
  const Scene* scene = nullptr;
  const Accel* accel = nullptr;
  const GuidingField* field = nullptr;  // required unless mode == Uniform
  SolverConfig cfg;
  bool neumann_flux = true;  // set from Scene::has_neumann_flux()

  StepContext() = default;
  StepContext(const Scene* s, const Accel* a, const GuidingField* f,
              const SolverConfig& c)
      : scene(s), accel(a), field(f), cfg(c),
        neumann_flux(s && s->has_neumann_flux()) {}

  bool guided() const { return cfg.mode != SamplerMode::Uniform; }
  double epsilon() const {
    return cfg.epsilon_shell > 0.0 ? cfg.epsilon_shell : scene->epsilon_shell;
  }
  double r_min() const { return cfg.r_min > 0.0 ? cfg.r_min : epsilon(); }
};

// ball Green's function (positive convention), zero at r == R
double greens_ball(double r, double R, int dim);
// integral of greens_ball over the ball: R^2/4 in 2D, R^2/6 in 3D
double greens_ball_mass(double R, int dim);

// inverse CDF of the radial density ~ G(r) r^{d-1} on [0, R]
double sample_greens_radius(double u, double R, int dim);

struct SourceSample {
  Vec2 y;
  double weight = 0.0;  // weight * f(y) estimates the source integral
};

// Single-sample source term: uniform direction (hemisphere when n is given),
// Green's-weighted radius, zero weight when the segment x->y leaves the star.
SourceSample sample_source_point(Rng& rng, Vec2 x, double R, const Accel& accel,
                                 const Vec2* n);

// Single-sample Neumann term: independent uniform direction, first Neumann
// hit within R contributes G(t) h(z) t^{d-1} |S^{d-1}| / |nu.n_z|.
double sample_neumann_contrib(Rng& rng, Vec2 x, double R, const Accel& accel,
                              const Scene& scene, const Vec2* n,
                              int exclude_segment, bool clamp_grazing,
                              double grazing_floor);

struct WalkState {
  Vec2 position;
  bool on_neumann = false;
  Vec2 normal;      // valid when on_neumann
  int segment = -1; // segment the walk sits on (excluded from its own casts)
  double throughput = 1.0;
  double accum = 0.0;
  int depth = 0;
  Rng rng;
  bool alive = true;
  bool escaped = false;
  // per-step scratch between begin_step and finish_step
  double step_radius = 0.0;
  WalkTrace trace;
  bool collect_trace = false;
};

struct DirectionSample {
  Vec3 nu;
  double pdf_mis = 0, pdf_g = 0, pdf_u = 0, c = 0;
};

// Decodes the guiding mixture at the walk position (identity for Uniform
// mode, which returns false).
bool decode_guiding(const StepContext& ctx, Vec2 position, MixtureParams* out);

DirectionSample sample_next_direction(const StepContext& ctx, WalkState& walk,
                                      const MixtureParams* params);

// Shell check, roulette, star radius and the source/Neumann contributions.
// Returns true when the walk still needs a direction sample this step.
bool begin_step(const StepContext& ctx, WalkState& walk);

// Samples the next direction, updates throughput by pdf_u/pdf_mis and moves
// the walk (first Neumann hit within R, else the sphere point).
void finish_step(const StepContext& ctx, WalkState& walk,
                 const MixtureParams* params);

// begin_step + decode + finish_step
void wost_step(const StepContext& ctx, WalkState& walk);

struct WalkResult {
  double estimate = 0.0;
  bool escaped = false;
};

WalkResult wost_walk(const StepContext& ctx, Vec2 x0, Rng rng,
                     std::vector<GuideRecord>* records);

struct PointStats {
  double mean = 0.0;
  double m2 = 0.0;
  int64_t count = 0;
  int64_t escaped = 0;

  void push(double v) {
    ++count;
    double d = v - mean;
    mean += d / static_cast<double>(count);
    m2 += d * (v - mean);
  }
  double variance_of_mean() const {
    return count > 1 ? m2 / (static_cast<double>(count) * (count - 1)) : 0.0;
  }
  double std_error() const { return std::sqrt(variance_of_mean()); }
};

// Reusable buffers for solve_batch; keeping one alive across batches avoids
// re-allocating walk states and traces every wpp round.
struct SolveScratch {
  std::vector<WalkState> walks;
  std::vector<uint32_t> alive, need;
  std::vector<char> needs_dir;
  std::vector<Vec2> positions;
  std::vector<double> raw_out;
  std::vector<MixtureParams> decoded;
};

// Runs one walk per point in wavefront order: all walks advance stage by
// stage so guiding decodes happen in one eval_batch call per step. Results
// are bit-identical to wost_walk with the same per-walk streams.
// Records (when collect) are appended in point order.
void solve_batch(const StepContext& ctx, std::span<const Vec2> points,
                 std::span<PointStats> stats, uint64_t seed, uint64_t wpp_index,
                 bool collect_records, std::vector<GuideRecord>* records,
                 SolveScratch* scratch = nullptr);

}  // namespace wost
