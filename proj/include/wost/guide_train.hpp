#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "wost/guide_field.hpp"
#include "wost/sphdist.hpp"
#include "wost/vec.hpp"

namespace wost {

// One directional training sample harvested from a completed walk.
struct GuideRecord {
  Vec2 x;             // walk position when the direction was sampled
  Vec3 nu;            // sampled direction
  double target = 0;  // |realized recursive contribution from the next point|
  double pdf_mis = 0;
  double pdf_g = 0;
  double pdf_u = 0;
  double c = 0;  // selection probability used at sampling time
  bool on_neumann = false;
  Vec2 normal;  // valid when on_neumann
};

// Per-step log of one walk, written by the solver and consumed by
// backfill_targets once the walk has terminated.
struct TraceStep {
  Vec2 x;
  Vec3 nu;
  double pdf_mis = 0, pdf_g = 0, pdf_u = 0, c = 0;
  bool on_neumann = false;
  Vec2 normal;
  double local_contrib = 0;  // <N> - <S> of this step, own throughput frame
  double multiplier = 0;     // recursive-term weight p_u/p_mis of this step
  double rr_factor = 1.0;    // roulette survival reweight applied this step
};

struct WalkTrace {
  std::vector<TraceStep> steps;
  double terminal_value = 0.0;  // Dirichlet data at termination, 0 on death
  void clear() {
    steps.clear();
    terminal_value = 0.0;
  }
};

struct TrainStats {
  size_t records_seen = 0;
  size_t records_consumed = 0;
  size_t skipped_low_pdf = 0;  // pdf_mis below the floor
  size_t skipped_low_v = 0;    // decoded mixture density below the floor
  size_t steps = 0;
  double mean_grad_norm = 0.0;
  double seconds = 0.0;

  void merge(const TrainStats& o);
};

struct TrainConfig {
  int minibatch = 1 << 14;
  // per-round cap on consumed records (uniform subsample); keeps the
  // blocking training stage bounded on CPU
  size_t max_records_per_round = 1 << 15;
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
  double e_fraction = 0.2;  // MIS selection-loss weight
  bool learn_selection = true;
  bool reflect = true;
  double pdf_floor = 1e-8;
  double v_floor = 1e-12;
  uint64_t seed = 0;
};

inline constexpr double kRecordPdfFloor = 1e-8;

// Single-sample KL gradient of Eq. c = -target * grad V / (pdf_mis * V),
// chained through the normalization mappings; V and its gradient come from
// the current raw parameters, pdf_mis stays at its sampling-time value.
// Returns false (zero gradient, counted in stats) when V is below v_floor.
bool kl_grad(const GuideRecord& rec, const UnnormParams& raw, bool reflect,
             double v_floor, ParamGrad& grad, TrainStats* stats);

// Gradient of the selection loss with respect to c_raw: the guided density
// is re-evaluated from params, pdf_u and pdf_mis come from the record, and
// the sigmoid chain c(1-c) is applied.
double selection_grad(const GuideRecord& rec, const MixtureParams& params,
                      bool reflect, double e_fraction);

// Reverse suffix scan over a terminated walk: record k's target is the
// magnitude of the realized estimate of u at step k+1.
// estimate_out (optional) receives the walk's reconstructed estimate.
std::vector<GuideRecord> backfill_targets(const WalkTrace& trace,
                                          double* estimate_out = nullptr);
void backfill_targets_append(const WalkTrace& trace,
                             std::vector<GuideRecord>& records,
                             double* estimate_out = nullptr);

// Shuffles, subsamples to the configured cap, then runs minibatch Adam
// updates (one pass). Deterministic for a fixed (seed, round) regardless of
// thread count: gradients accumulate in fixed-size chunks reduced in order.
TrainStats train_batch(GuidingField& field, std::span<const GuideRecord> records,
                       const TrainConfig& cfg, uint64_t round);

// true while online learning should continue (wpp below the threshold)
bool training_active(uint64_t wpp_completed, uint64_t threshold);

}  // namespace wost
