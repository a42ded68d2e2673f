#include "wost/guide_train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "wost/rng.hpp"

namespace wost {

void TrainStats::merge(const TrainStats& o) {
  records_seen += o.records_seen;
  records_consumed += o.records_consumed;
  skipped_low_pdf += o.skipped_low_pdf;
  skipped_low_v += o.skipped_low_v;
  double total = static_cast<double>(steps + o.steps);
  if (total > 0)
    mean_grad_norm =
        (mean_grad_norm * steps + o.mean_grad_norm * o.steps) / total;
  steps += o.steps;
  seconds += o.seconds;
}

bool kl_grad(const GuideRecord& rec, const UnnormParams& raw, bool reflect,
             double v_floor, ParamGrad& grad, TrainStats* stats) {
  grad.clear(raw.k);
  if (rec.target == 0.0) return true;  // zero target, zero gradient

  ParamGrad dv;
  dv.clear(raw.k);
  double v = rec.on_neumann && reflect
                 ? mixture_grad_reflected(rec.nu, to3(rec.normal), raw, dv)
                 : mixture_grad(rec.nu, raw, dv);
  if (!(v > v_floor)) {
    if (stats) ++stats->skipped_low_v;
    return false;
  }
  double scale = -rec.target / (rec.pdf_mis * v);
  grad.add_scaled(dv, scale, raw.k);
  return true;
}

double selection_grad(const GuideRecord& rec, const MixtureParams& params,
                      bool reflect, double e_fraction) {
  Vec3 n = to3(rec.normal);
  double pg = rec.on_neumann
                  ? (reflect ? reflected_pdf(rec.nu, params, n)
                             : mixture_pdf(rec.nu, params))
                  : mixture_pdf(rec.nu, params);
  double pu = rec.pdf_u;
  double p_now = params.c * pg + (1.0 - params.c) * pu;
  if (!(p_now > 0.0)) return 0.0;
  double dc = -e_fraction * rec.target * (pg - pu) / (p_now * rec.pdf_mis);
  return dc * params.c * (1.0 - params.c);  // sigmoid chain
}

void backfill_targets_append(const WalkTrace& trace,
                             std::vector<GuideRecord>& records,
                             double* estimate_out) {
  size_t base = records.size();
  records.resize(base + trace.steps.size());
  double u_next = trace.terminal_value;  // realized estimate of u(x_{k+1})
  for (size_t k = trace.steps.size(); k-- > 0;) {
    const TraceStep& s = trace.steps[k];
    GuideRecord& r = records[base + k];
    r.x = s.x;
    r.nu = s.nu;
    r.target = std::abs(u_next);
    r.pdf_mis = s.pdf_mis;
    r.pdf_g = s.pdf_g;
    r.pdf_u = s.pdf_u;
    r.c = s.c;
    r.on_neumann = s.on_neumann;
    r.normal = s.normal;
    u_next = s.rr_factor * (s.local_contrib + s.multiplier * u_next);
  }
  if (estimate_out) *estimate_out = u_next;
}

std::vector<GuideRecord> backfill_targets(const WalkTrace& trace,
                                          double* estimate_out) {
  std::vector<GuideRecord> records;
  backfill_targets_append(trace, records, estimate_out);
  return records;
}

namespace {

constexpr size_t kGradChunk = 2048;

}  // namespace

TrainStats train_batch(GuidingField& field, std::span<const GuideRecord> records,
                       const TrainConfig& cfg, uint64_t round) {
  auto t0 = std::chrono::steady_clock::now();
  TrainStats stats;
  stats.records_seen = records.size();
  if (records.empty()) return stats;

  // usable records, shuffled; Fisher-Yates with a per-round stream
  std::vector<uint32_t> order;
  order.reserve(records.size());
  for (uint32_t i = 0; i < records.size(); ++i) {
    if (records[i].pdf_mis < cfg.pdf_floor) {
      ++stats.skipped_low_pdf;
      continue;
    }
    order.push_back(i);
  }
  Rng rng(Rng::mix(cfg.seed) ^ Rng::mix(round + 1), round);
  for (size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[rng.uniform_index(static_cast<uint32_t>(i))]);
  if (order.size() > cfg.max_records_per_round)
    order.resize(cfg.max_records_per_round);
  if (order.empty()) return stats;

  const int k = field.config().mixture_k;
  const int dim = field.config().mixture_dim;
  const int od = field.config().output_dim();
  const size_t n_params = field.param_count();

  size_t n_chunks_max = (cfg.minibatch + kGradChunk - 1) / kGradChunk;
  std::vector<std::vector<double>> chunk_grads(n_chunks_max);
  std::vector<TrainStats> chunk_stats(n_chunks_max);
  std::vector<double> grad(n_params, 0.0);

  for (size_t begin = 0; begin < order.size(); begin += cfg.minibatch) {
    size_t end = std::min(begin + cfg.minibatch, order.size());
    size_t count = end - begin;
    double inv_count = 1.0 / static_cast<double>(count);
    size_t n_chunks = (count + kGradChunk - 1) / kGradChunk;

    // Each fixed-size chunk accumulates into its own buffer; buffers are
    // reduced in chunk order so results do not depend on the thread count.
#pragma omp parallel for schedule(dynamic, 1)
    for (long ci = 0; ci < static_cast<long>(n_chunks); ++ci) {
      auto& cg = chunk_grads[ci];
      if (cg.size() != n_params) cg.assign(n_params, 0.0);
      TrainStats& cs = chunk_stats[ci];
      GuidingField::Tape tape;
      double out[(2 + 3) * kMaxMixtureComponents + 1];
      std::vector<double> d_out(od);
      ParamGrad pg;

      size_t lo = begin + ci * kGradChunk;
      size_t hi = std::min(lo + kGradChunk, end);
      for (size_t r = lo; r < hi; ++r) {
        const GuideRecord& rec = records[order[r]];
        field.eval_with_tape(rec.x, out, tape);
        UnnormParams raw = unpack_params(out, k, dim);

        if (!kl_grad(rec, raw, cfg.reflect, cfg.v_floor, pg, &cs)) continue;
        if (cfg.learn_selection) {
          MixtureParams params = normalize_params(raw);
          pg.c_raw = selection_grad(rec, params, cfg.reflect, cfg.e_fraction);
        } else {
          pg.c_raw = 0.0;
        }
        ++cs.records_consumed;

        // pack the parameter gradient into the raw output layout
        double* m = d_out.data();
        for (int i = 0; i < k; ++i)
          for (int a = 0; a < dim; ++a) *m++ = pg.mu_raw[i][a] * inv_count;
        for (int i = 0; i < k; ++i) *m++ = pg.kappa_raw[i] * inv_count;
        for (int i = 0; i < k; ++i) *m++ = pg.lambda_raw[i] * inv_count;
        *m = pg.c_raw * inv_count;

        field.backward(tape, d_out.data(), cg);
      }
    }

    for (size_t ci = 0; ci < n_chunks; ++ci) {
      auto& cg = chunk_grads[ci];
      for (size_t i = 0; i < n_params; ++i) {
        grad[i] += cg[i];
        cg[i] = 0.0;
      }
      stats.merge(chunk_stats[ci]);
      chunk_stats[ci] = TrainStats{};
    }

    double norm2_acc = 0.0;
    for (double g : grad) norm2_acc += g * g;
    stats.mean_grad_norm =
        (stats.mean_grad_norm * stats.steps + std::sqrt(norm2_acc)) /
        static_cast<double>(stats.steps + 1);
    ++stats.steps;

    field.adam_step(grad, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
  }

  stats.seconds = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
  return stats;
}

bool training_active(uint64_t wpp_completed, uint64_t threshold) {
  return wpp_completed < threshold;
}

}  // namespace wost
