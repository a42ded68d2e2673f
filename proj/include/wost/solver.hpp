#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "wost/guide_field.hpp"
#include "wost/guide_train.hpp"
#include "wost/image.hpp"
#include "wost/presets.hpp"
#include "wost/wost.hpp"

namespace wost {

struct GridSpec {
  int width = 128;
  int height = 128;
  std::optional<Bbox> bbox;  // empty: preset eval bbox, then scene bbox
};

struct RunConfig {
  std::string scene_path;  // exactly one of scene_path / preset
  std::string preset;
  GridSpec grid;
  int wpp = 256;
  SamplerMode mode = SamplerMode::Uniform;
  double fixed_c = 0.5;
  uint64_t train_until = 256;
  FieldConfig field;
  TrainConfig train;
  SolverConfig solver;
  uint64_t seed = 1;

  std::string out_csv, out_pfm, out_png;
  std::string log_path;        // convergence csv "wpp,relmse,seconds"
  std::string reference_path;  // csv used for relMSE logging
  std::string field_in, field_out;
  std::string records_path;  // dump of the last training round's records
};

// The PDE problem behind a config: scene plus optional exact solution.
struct Problem {
  Scene scene;
  std::function<double(Vec2)> analytic;
  Bbox eval_bbox;
  std::vector<Vec2> probes;
};

Problem load_problem(const RunConfig& cfg);
Bbox grid_bbox(const RunConfig& cfg, const Problem& prob);

struct LogRow {
  int wpp = 0;
  double relmse = 0.0;
  double seconds = 0.0;
};

struct RunResult {
  SolutionImage image;
  std::vector<LogRow> log;
  double seconds = 0.0;
  TrainStats train_stats;
  int64_t escaped_walks = 0;
  std::optional<GuidingField> field;
  std::vector<GuideRecord> last_records;
};

// Full solve over the evaluation grid: wpp batches of one walk per cell with
// online training while active; writes the configured outputs.
RunResult run_solve(const RunConfig& cfg);

// Same walk/train loop over an arbitrary point list (no file output).
struct ProbeResult {
  std::vector<PointStats> stats;
  double seconds = 0.0;
  std::optional<GuidingField> field;
};
ProbeResult solve_points(const Problem& prob, const RunConfig& cfg,
                         std::span<const Vec2> points, int wpp);

// Analytic evaluation when the problem has a closed form, otherwise a long
// uniform-sampler run with an independent seed.
SolutionImage generate_reference(const RunConfig& cfg, int wpp_ref);

struct AblationRow {
  SamplerMode mode;
  double relmse = 0.0;
  double seconds = 0.0;
  std::vector<LogRow> log;
};

std::vector<AblationRow> run_ablation(const RunConfig& cfg,
                                      const std::vector<SamplerMode>& modes,
                                      const SolutionImage& reference);

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config_file(const std::string& path);

void write_convergence_log(const std::vector<LogRow>& rows,
                           const std::string& path);
void write_records_csv(std::span<const GuideRecord> records,
                       const std::string& path);

// honors the WOST_THREADS environment variable (OpenMP thread cap)
void apply_thread_env();

}  // namespace wost
