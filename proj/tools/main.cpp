#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "wost/image.hpp"
#include "wost/solver.hpp"

namespace {

struct Overrides {
  int wpp = -1;
  long long seed = -1;
  std::string sampler;
  long long train_until = -1;
  int k = -1;
  std::string out;
  int grid = -1;
};

void add_override_flags(CLI::App* cmd, Overrides& ov) {
  cmd->add_option("--wpp", ov.wpp, "walks per point");
  cmd->add_option("--seed", ov.seed, "rng seed");
  cmd->add_option("--sampler", ov.sampler,
                  "uniform | guiding_only | fixed_mis | learnable_mis");
  cmd->add_option("--train-until", ov.train_until,
                  "stop online training after this many wpp");
  cmd->add_option("--k", ov.k, "number of vMF mixture components");
  cmd->add_option("--out", ov.out, "solution csv path");
  cmd->add_option("--grid", ov.grid, "square evaluation grid resolution");
}

void apply(const Overrides& ov, wost::RunConfig& cfg) {
  if (ov.wpp > 0) cfg.wpp = ov.wpp;
  if (ov.seed >= 0) cfg.seed = static_cast<uint64_t>(ov.seed);
  if (!ov.sampler.empty()) cfg.mode = wost::parse_sampler_mode(ov.sampler);
  if (ov.train_until >= 0)
    cfg.train_until = static_cast<uint64_t>(ov.train_until);
  if (ov.k > 0) cfg.field.mixture_k = ov.k;
  if (!ov.out.empty()) cfg.out_csv = ov.out;
  if (ov.grid > 0) cfg.grid.width = cfg.grid.height = ov.grid;
}

}  // namespace

int main(int argc, char** argv) {
  wost::apply_thread_env();
  CLI::App app{"Monte Carlo Poisson solver: walk on stars with learned "
               "directional guiding"};
  app.require_subcommand(1);

  std::string config_path;
  Overrides ov;

  auto* solve = app.add_subcommand("solve", "run a solve from a config file");
  solve->add_option("config", config_path, "run config (json)")->required();
  add_override_flags(solve, ov);

  auto* reference =
      app.add_subcommand("reference", "generate a reference solution");
  reference->add_option("config", config_path, "run config (json)")->required();
  int wpp_ref = 0;
  reference->add_option("--wpp-ref", wpp_ref,
                        "reference walks per point (default 64x config wpp)");
  add_override_flags(reference, ov);

  auto* compare = app.add_subcommand("compare", "relMSE between two csv images");
  std::string est_path, ref_path;
  compare->add_option("est", est_path, "estimate csv")->required();
  compare->add_option("ref", ref_path, "reference csv")->required();

  auto* ablate = app.add_subcommand("ablate", "run several sampler modes");
  ablate->add_option("config", config_path, "run config (json)")->required();
  std::string modes_arg = "uniform,fixed_mis,guiding_only,learnable_mis";
  ablate->add_option("--modes", modes_arg, "comma-separated sampler modes");
  std::string ablate_ref;
  ablate->add_option("--reference", ablate_ref, "reference csv (else analytic)");
  int ablate_wpp_ref = 0;
  ablate->add_option("--wpp-ref", ablate_wpp_ref,
                     "generate a uniform reference with this many wpp");
  std::string table_out;
  ablate->add_option("--table", table_out, "write the relMSE table csv here");
  add_override_flags(ablate, ov);

  CLI11_PARSE(app, argc, argv);

  try {
    if (solve->parsed()) {
      wost::RunConfig cfg = wost::load_run_config_file(config_path);
      apply(ov, cfg);
      wost::RunResult res = wost::run_solve(cfg);
      std::printf("solved %dx%d at %d wpp in %.2fs (%lld escaped walks)\n",
                  res.image.width, res.image.height, cfg.wpp, res.seconds,
                  static_cast<long long>(res.escaped_walks));
      if (!res.log.empty() && !std::isnan(res.log.back().relmse))
        std::printf("relMSE vs reference: %.6g\n", res.log.back().relmse);
    } else if (reference->parsed()) {
      wost::RunConfig cfg = wost::load_run_config_file(config_path);
      apply(ov, cfg);
      if (wpp_ref <= 0) wpp_ref = 64 * cfg.wpp;
      wost::SolutionImage img = wost::generate_reference(cfg, wpp_ref);
      std::string out = cfg.out_csv.empty() ? "reference.csv" : cfg.out_csv;
      wost::write_csv(img, out);
      std::printf("reference written to %s\n", out.c_str());
    } else if (compare->parsed()) {
      wost::SolutionImage est = wost::read_csv(est_path);
      wost::SolutionImage ref = wost::read_csv(ref_path);
      std::printf("relMSE: %.9g\n", wost::compute_relmse(est, ref));
    } else if (ablate->parsed()) {
      wost::RunConfig cfg = wost::load_run_config_file(config_path);
      apply(ov, cfg);
      std::vector<wost::SamplerMode> modes;
      std::stringstream ss(modes_arg);
      std::string item;
      while (std::getline(ss, item, ','))
        if (!item.empty()) modes.push_back(wost::parse_sampler_mode(item));

      wost::SolutionImage ref;
      if (!ablate_ref.empty()) {
        ref = wost::read_csv(ablate_ref);
      } else {
        wost::Problem prob = wost::load_problem(cfg);
        if (!prob.analytic && ablate_wpp_ref <= 0)
          throw std::runtime_error(
              "ablate: no analytic solution; pass --reference or --wpp-ref");
        ref = wost::generate_reference(
            cfg, ablate_wpp_ref > 0 ? ablate_wpp_ref : 64 * cfg.wpp);
      }

      auto rows = wost::run_ablation(cfg, modes, ref);
      std::printf("%-16s %12s %10s\n", "mode", "relMSE", "seconds");
      for (const auto& row : rows)
        std::printf("%-16s %12.6g %10.2f\n", wost::sampler_mode_name(row.mode),
                    row.relmse, row.seconds);
      if (!table_out.empty()) {
        std::ofstream out(table_out);
        out << "mode,relmse,seconds\n";
        for (const auto& row : rows)
          out << wost::sampler_mode_name(row.mode) << "," << row.relmse << ","
              << row.seconds << "\n";
        for (const auto& row : rows) {
          wost::write_convergence_log(
              row.log, table_out + "." +
                           wost::sampler_mode_name(row.mode) + ".csv");
        }
      }
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
