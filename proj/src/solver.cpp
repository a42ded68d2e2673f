#include "wost/solver.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "json.hpp"

namespace wost {

using nlohmann::json;

void apply_thread_env() {
#ifdef _OPENMP
  if (const char* env = std::getenv("WOST_THREADS")) {
    int n = std::atoi(env);
    if (n > 0) omp_set_num_threads(n);
  }
#endif
}

Problem load_problem(const RunConfig& cfg) {
  Problem prob;
  if (!cfg.preset.empty()) {
    Preset preset = make_preset(cfg.preset);
    prob.scene = std::move(preset.scene);
    prob.analytic = std::move(preset.analytic);
    prob.eval_bbox = preset.eval_bbox;
    prob.probes = std::move(preset.probes);
  } else if (!cfg.scene_path.empty()) {
    prob.scene = load_scene_file(cfg.scene_path);
    prob.eval_bbox = prob.scene.bbox;
  } else {
    throw std::invalid_argument("run config needs a 'preset' or a 'scene'");
  }
  return prob;
}

Bbox grid_bbox(const RunConfig& cfg, const Problem& prob) {
  if (cfg.grid.bbox) return *cfg.grid.bbox;
  return prob.eval_bbox.valid() ? prob.eval_bbox : prob.scene.bbox;
}

namespace {

struct Engine {
  const Problem& prob;
  RunConfig cfg;
  Accel accel;
  std::optional<GuidingField> field;
  StepContext ctx;
  TrainConfig tcfg;
  TrainStats train_totals;
  SolveScratch scratch;
  std::vector<GuideRecord> records;
  std::vector<GuideRecord> last_records;

  Engine(const Problem& problem, const RunConfig& config)
      : prob(problem), cfg(config), accel(problem.scene) {
    if (!prob.scene.has_dirichlet())
      throw SceneError(
          "solver: scene has no Dirichlet boundary; walks cannot terminate");
    cfg.solver.mode = cfg.mode;
    cfg.solver.fixed_c = cfg.fixed_c;
    if (cfg.mode != SamplerMode::Uniform) {
      if (!cfg.field_in.empty()) {
        std::ifstream in(cfg.field_in, std::ios::binary);
        if (!in)
          throw std::runtime_error("cannot open field checkpoint '" +
                                   cfg.field_in + "'");
        field = GuidingField::load(in);
      } else {
        field = GuidingField(cfg.field, prob.scene.bbox, cfg.seed);
      }
    }
    ctx = StepContext{&prob.scene, &accel,
                      field ? &field.value() : nullptr, cfg.solver};
    tcfg = cfg.train;
    tcfg.reflect = cfg.solver.reflect_at_neumann;
    tcfg.learn_selection = cfg.mode == SamplerMode::LearnableMis;
    tcfg.seed = cfg.seed;
  }

  // one wpp over all points, then a training round while learning is active
  void run_batch(std::span<const Vec2> points, std::span<PointStats> stats,
                 uint64_t round) {
    bool training =
        ctx.guided() && training_active(round, cfg.train_until);
    records.clear();
    solve_batch(ctx, points, stats, cfg.seed, round, training,
                training ? &records : nullptr, &scratch);
    if (training && !records.empty()) {
      TrainStats ts = train_batch(*field, records, tcfg, round);
      train_totals.merge(ts);
      if (!cfg.records_path.empty()) last_records = records;
    }
  }
};

}  // namespace

ProbeResult solve_points(const Problem& prob, const RunConfig& cfg,
                         std::span<const Vec2> points, int wpp) {
  auto t0 = std::chrono::steady_clock::now();
  Engine engine(prob, cfg);
  ProbeResult out;
  out.stats.assign(points.size(), PointStats{});
  for (int b = 0; b < wpp; ++b)
    engine.run_batch(points, out.stats, static_cast<uint64_t>(b));
  out.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  out.field = std::move(engine.field);
  return out;
}

RunResult run_solve(const RunConfig& cfg) {
  auto t0 = std::chrono::steady_clock::now();
  Problem prob = load_problem(cfg);
  Engine engine(prob, cfg);

  RunResult out;
  out.image = make_image(cfg.grid.width, cfg.grid.height, grid_bbox(cfg, prob));
  std::vector<Vec2> points = out.image.cell_centers();

  std::optional<SolutionImage> reference;
  if (!cfg.reference_path.empty()) reference = read_csv(cfg.reference_path);

  for (int b = 0; b < cfg.wpp; ++b) {
    engine.run_batch(points, out.image.cells, static_cast<uint64_t>(b));
    LogRow row;
    row.wpp = b + 1;
    row.relmse = reference ? compute_relmse(out.image, *reference)
                           : std::nan("");
    row.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    out.log.push_back(row);
  }

  out.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  out.train_stats = engine.train_totals;
  for (const PointStats& s : out.image.cells) out.escaped_walks += s.escaped;
  out.field = std::move(engine.field);
  out.last_records = std::move(engine.last_records);

  if (!cfg.out_csv.empty()) write_csv(out.image, cfg.out_csv);
  if (!cfg.out_pfm.empty()) write_pfm(out.image, cfg.out_pfm);
  if (!cfg.out_png.empty()) write_png(out.image, cfg.out_png);
  if (!cfg.log_path.empty()) write_convergence_log(out.log, cfg.log_path);
  if (!cfg.field_out.empty() && out.field) {
    std::ofstream f(cfg.field_out, std::ios::binary);
    out.field->save(f);
  }
  if (!cfg.records_path.empty())
    write_records_csv(out.last_records, cfg.records_path);
  return out;
}

SolutionImage generate_reference(const RunConfig& cfg, int wpp_ref) {
  Problem prob = load_problem(cfg);
  SolutionImage img =
      make_image(cfg.grid.width, cfg.grid.height, grid_bbox(cfg, prob));
  if (prob.analytic) {
    for (int j = 0; j < img.height; ++j) {
      for (int i = 0; i < img.width; ++i) {
        PointStats& s = img.at(i, j);
        s.mean = prob.analytic(img.cell_center(i, j));
        s.count = 1;
      }
    }
    return img;
  }
  RunConfig ref_cfg = cfg;
  ref_cfg.mode = SamplerMode::Uniform;
  ref_cfg.seed = Rng::mix(cfg.seed ^ 0x5eed1ef5ULL);  // independent of est runs
  ProbeResult res =
      solve_points(prob, ref_cfg, img.cell_centers(), wpp_ref);
  img.cells = std::move(res.stats);
  return img;
}

std::vector<AblationRow> run_ablation(const RunConfig& cfg,
                                      const std::vector<SamplerMode>& modes,
                                      const SolutionImage& reference) {
  if (modes.empty())
    throw std::invalid_argument("run_ablation: mode list is empty");
  std::vector<AblationRow> rows;
  for (SamplerMode mode : modes) {
    RunConfig mode_cfg = cfg;
    mode_cfg.mode = mode;
    mode_cfg.out_csv.clear();
    mode_cfg.out_pfm.clear();
    mode_cfg.out_png.clear();
    mode_cfg.log_path.clear();
    mode_cfg.field_out.clear();
    mode_cfg.records_path.clear();

    Problem prob = load_problem(mode_cfg);
    Engine engine(prob, mode_cfg);
    SolutionImage img = make_image(mode_cfg.grid.width, mode_cfg.grid.height,
                                   grid_bbox(mode_cfg, prob));
    std::vector<Vec2> points = img.cell_centers();

    AblationRow row;
    row.mode = mode;
    auto t0 = std::chrono::steady_clock::now();
    for (int b = 0; b < mode_cfg.wpp; ++b) {
      engine.run_batch(points, img.cells, static_cast<uint64_t>(b));
      LogRow lr;
      lr.wpp = b + 1;
      lr.relmse = compute_relmse(img, reference);
      lr.seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
              .count();
      row.log.push_back(lr);
    }
    row.seconds = row.log.back().seconds;
    row.relmse = row.log.back().relmse;
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

Bbox json_bbox(const json& j) {
  Bbox b;
  b.min = {j.at("min")[0].get<double>(), j.at("min")[1].get<double>()};
  b.max = {j.at("max")[0].get<double>(), j.at("max")[1].get<double>()};
  return b;
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(std::string("run config: ") + e.what());
  }
  RunConfig cfg;
  cfg.scene_path = doc.value("scene", std::string());
  cfg.preset = doc.value("preset", std::string());
  if (doc.contains("grid")) {
    const json& g = doc["grid"];
    cfg.grid.width = g.value("width", cfg.grid.width);
    cfg.grid.height = g.value("height", cfg.grid.height);
    if (g.contains("bbox") && g["bbox"].is_object())
      cfg.grid.bbox = json_bbox(g["bbox"]);
  }
  cfg.wpp = doc.value("wpp", cfg.wpp);
  if (cfg.wpp < 1) throw std::runtime_error("run config: wpp must be >= 1");
  if (cfg.grid.width < 1 || cfg.grid.height < 1)
    throw std::runtime_error("run config: grid resolution must be >= 1x1");
  if (doc.contains("sampler"))
    cfg.mode = parse_sampler_mode(doc["sampler"].get<std::string>());
  cfg.fixed_c = doc.value("fixed_c", cfg.fixed_c);
  if (cfg.fixed_c <= 0.0 || cfg.fixed_c >= 1.0)
    throw std::runtime_error("run config: fixed_c must lie in (0,1)");
  cfg.train_until = doc.value("train_until", cfg.train_until);
  cfg.seed = doc.value("seed", cfg.seed);
  cfg.field.mixture_k = doc.value("k", cfg.field.mixture_k);

  if (doc.contains("field")) {
    const json& f = doc["field"];
    if (f.contains("levels"))
      cfg.field.level_res = f["levels"].get<std::vector<int>>();
    cfg.field.features = f.value("features", cfg.field.features);
    cfg.field.hidden = f.value("hidden", cfg.field.hidden);
  }
  if (doc.contains("train")) {
    const json& t = doc["train"];
    cfg.train.lr = t.value("lr", cfg.train.lr);
    cfg.train.minibatch = t.value("minibatch", cfg.train.minibatch);
    cfg.train.max_records_per_round =
        t.value("max_records", cfg.train.max_records_per_round);
    cfg.train.e_fraction = t.value("e_fraction", cfg.train.e_fraction);
  }
  if (doc.contains("solver")) {
    const json& s = doc["solver"];
    cfg.solver.rr_depth = s.value("rr_depth", cfg.solver.rr_depth);
    cfg.solver.reflect_at_neumann =
        s.value("reflect", cfg.solver.reflect_at_neumann);
    cfg.solver.epsilon_shell =
        s.value("epsilon_shell", cfg.solver.epsilon_shell);
    cfg.solver.r_min = s.value("r_min", cfg.solver.r_min);
    cfg.solver.clamp_grazing =
        s.value("clamp_grazing", cfg.solver.clamp_grazing);
  }

  cfg.out_csv = doc.value("out", std::string());
  cfg.out_pfm = doc.value("out_pfm", std::string());
  cfg.out_png = doc.value("out_png", std::string());
  cfg.log_path = doc.value("log", std::string());
  cfg.reference_path = doc.value("reference", std::string());
  cfg.field_in = doc.value("field_in", std::string());
  cfg.field_out = doc.value("field_out", std::string());
  cfg.records_path = doc.value("records_out", std::string());
  return cfg;
}

RunConfig load_run_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open run config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

void write_convergence_log(const std::vector<LogRow>& rows,
                           const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << "wpp,relmse,seconds\n";
  char buf[96];
  for (const LogRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%d,%.9g,%.3f\n", r.wpp, r.relmse,
                  r.seconds);
    out << buf;
  }
}

void write_records_csv(std::span<const GuideRecord> records,
                       const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << "x,y,nu_x,nu_y,target,pdf_mis,pdf_g,pdf_u,c,on_neumann\n";
  char buf[256];
  for (const GuideRecord& r : records) {
    std::snprintf(buf, sizeof(buf),
                  "%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%d\n", r.x.x,
                  r.x.y, r.nu.x, r.nu.y, r.target, r.pdf_mis, r.pdf_g, r.pdf_u,
                  r.c, r.on_neumann ? 1 : 0);
    out << buf;
  }
}

}  // namespace wost
