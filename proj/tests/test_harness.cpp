#include <cstdio>
#include <fstream>
#include <sstream>

#include <zlib.h>

#include "doctest.h"
#include "wost/image.hpp"
#include "wost/solver.hpp"

using namespace wost;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string tmp_path(const std::string& name) {
  return std::string("harness_test_") + name;
}

RunConfig base_config(const std::string& preset) {
  RunConfig cfg;
  cfg.preset = preset;
  cfg.grid.width = 4;
  cfg.grid.height = 4;
  cfg.wpp = 4;
  cfg.seed = 5;
  cfg.field.level_res = {9, 17};
  cfg.field.features = 2;
  cfg.field.mixture_k = 4;
  return cfg;
}

}  // namespace

TEST_CASE("run_solve on a tiny grid") {
  RunConfig cfg = base_config("harmonic-disk");
  cfg.grid.width = cfg.grid.height = 2;
  cfg.wpp = 1;
  RunResult res = run_solve(cfg);
  CHECK(res.image.cells.size() == 4);
  for (const PointStats& s : res.image.cells) {
    CHECK(s.count == 1);  // one independent walk per cell
    CHECK(std::isfinite(s.mean));
  }
  CHECK(res.log.size() == 1);
}

TEST_CASE("train_until zero never touches the field") {
  RunConfig cfg = base_config("neumann-strip");
  cfg.mode = SamplerMode::LearnableMis;
  cfg.train_until = 0;
  RunResult res = run_solve(cfg);
  REQUIRE(res.field.has_value());
  GuidingField fresh(cfg.field, res.field->bbox(), cfg.seed);
  CHECK(res.field->bit_equal(fresh));
  CHECK(res.field->adam_steps() == 0);

  cfg.train_until = 4;
  RunResult trained = run_solve(cfg);
  CHECK(trained.field->adam_steps() > 0);
}

TEST_CASE("identical config and seed give byte-identical csv output") {
  RunConfig cfg = base_config("curves");
  cfg.mode = SamplerMode::LearnableMis;
  cfg.train_until = 2;
  cfg.out_csv = tmp_path("det_a.csv");
  RunResult a = run_solve(cfg);
  cfg.out_csv = tmp_path("det_b.csv");
  RunResult b = run_solve(cfg);
  CHECK(slurp(tmp_path("det_a.csv")) == slurp(tmp_path("det_b.csv")));
  CHECK(!slurp(tmp_path("det_a.csv")).empty());
  std::remove(tmp_path("det_a.csv").c_str());
  std::remove(tmp_path("det_b.csv").c_str());
  (void)a;
  (void)b;
}

TEST_CASE("compute_relmse") {
  SolutionImage ref = make_image(2, 1, Bbox{{0, 0}, {1, 1}});
  SolutionImage est = ref;

  SUBCASE("zero when est equals ref") {
    ref.at(0, 0).mean = 3.0;
    ref.at(1, 0).mean = -2.0;
    est = ref;
    CHECK(compute_relmse(est, ref) == 0.0);
  }
  SUBCASE("constant-one reference with 10% error") {
    for (auto& c : ref.cells) c.mean = 1.0;
    est = ref;
    for (auto& c : est.cells) c.mean = 1.1;
    // (0.1)^2 / (1 + (0.01)^2)
    CHECK(compute_relmse(est, ref) ==
          doctest::Approx(0.01 / 1.0001).epsilon(1e-12));
  }
  SUBCASE("single cell instance") {
    SolutionImage r1 = make_image(1, 1, Bbox{{0, 0}, {1, 1}});
    SolutionImage e1 = r1;
    r1.at(0, 0).mean = 1.0;
    e1.at(0, 0).mean = 2.0;
    CHECK(compute_relmse(e1, r1) == doctest::Approx(1.0 / 1.0001));
  }
  SUBCASE("dimension mismatch throws") {
    SolutionImage other = make_image(3, 1, Bbox{{0, 0}, {1, 1}});
    CHECK_THROWS_AS((void)compute_relmse(other, ref), std::invalid_argument);
  }
}

TEST_CASE("analytic references are exact and noiseless") {
  RunConfig cfg = base_config("const-source-disk");
  SolutionImage ref = generate_reference(cfg, 1);
  for (int j = 0; j < ref.height; ++j) {
    for (int i = 0; i < ref.width; ++i) {
      Vec2 p = ref.cell_center(i, j);
      CHECK(ref.at(i, j).mean == p.x * p.x + p.y * p.y - 1.0);
      CHECK(ref.at(i, j).variance_of_mean() == 0.0);
    }
  }
}

TEST_CASE("uniform reference self-consistency under doubling") {
  // a disk problem with u = r^2 + 1: the solution stays away from zero, so
  // the relMSE is not dominated by a handful of near-zero-reference cells
  Scene scene;
  scene.bbox = Bbox{{-1.1, -1.1}, {1.1, 1.1}};
  scene.epsilon_shell = 1e-4;
  scene.values.emplace_back("g", ValueSpec{ValueSpec::Constant{2.0}});
  scene.source.spec = SourceField::Constant{4.0};
  std::vector<Vec2> pts;
  for (int i = 0; i < 64; ++i) {
    double a = kTwoPi * i / 64;
    pts.push_back({std::cos(a), std::sin(a)});
  }
  for (int i = 0; i < 64; ++i) {
    BoundarySegment s;
    s.a = pts[i];
    s.b = pts[(i + 1) % 64];
    s.kind = BoundaryKind::Dirichlet;
    s.value_ref = "g";
    scene.segments.push_back(s);
  }
  scene.validate();
  std::ofstream(tmp_path("disk.json")) << write_scene(scene);

  RunConfig cfg;
  cfg.scene_path = tmp_path("disk.json");
  cfg.grid.width = cfg.grid.height = 16;
  cfg.grid.bbox = Bbox{{-0.55, -0.55}, {0.55, 0.55}};
  cfg.wpp = 8;
  cfg.seed = 5;
  cfg.mode = SamplerMode::Uniform;
  RunResult est = run_solve(cfg);

  // the same seed family makes the 1024-wpp reference a strict extension of
  // the 512-wpp one, which is what "doubling wpp_ref" means for one run
  SolutionImage ref1 = generate_reference(cfg, 512);
  SolutionImage ref2 = generate_reference(cfg, 1024);
  double r1 = compute_relmse(est.image, ref1);
  double r2 = compute_relmse(est.image, ref2);
  CHECK(std::abs(r1 - r2) / r2 < 0.10);
  std::remove(tmp_path("disk.json").c_str());
}

TEST_CASE("run_ablation") {
  RunConfig cfg = base_config("harmonic-disk");
  SolutionImage ref = generate_reference(cfg, 1);

  SUBCASE("single mode gives a single row") {
    auto rows = run_ablation(cfg, {SamplerMode::Uniform}, ref);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].mode == SamplerMode::Uniform);
    CHECK(rows[0].log.size() == static_cast<size_t>(cfg.wpp));
  }
  SUBCASE("uniform against itself is identical") {
    auto rows =
        run_ablation(cfg, {SamplerMode::Uniform, SamplerMode::Uniform}, ref);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].relmse == rows[1].relmse);
  }
  SUBCASE("empty mode list throws") {
    CHECK_THROWS_AS(run_ablation(cfg, {}, ref), std::invalid_argument);
  }
}

TEST_CASE("csv writer round-trips") {
  SolutionImage img = make_image(1, 1, Bbox{{0, 0}, {2, 1}});
  img.at(0, 0).push(0.25);
  img.at(0, 0).push(0.75);
  write_csv(img, tmp_path("w.csv"));
  std::string text = slurp(tmp_path("w.csv"));
  CHECK(text.find("i,j,mean,var,count") != std::string::npos);
  CHECK(text.find("0,0,0.5,") != std::string::npos);

  SolutionImage back = read_csv(tmp_path("w.csv"));
  CHECK(back.width == 1);
  CHECK(back.at(0, 0).mean == 0.5);
  CHECK(back.at(0, 0).count == 2);
  CHECK(back.at(0, 0).variance_of_mean() ==
        doctest::Approx(img.at(0, 0).variance_of_mean()));
  std::remove(tmp_path("w.csv").c_str());
}

TEST_CASE("pfm writer round-trips bit-exactly") {
  SolutionImage img = make_image(3, 2, Bbox{{0, 0}, {1, 1}});
  double vals[] = {0.5, -1.25, 3.0, 1e-7, 2.5e8, -0.0};
  for (int j = 0, k = 0; j < 2; ++j)
    for (int i = 0; i < 3; ++i, ++k) img.at(i, j).mean = vals[k];
  write_pfm(img, tmp_path("w.pfm"));
  SolutionImage back = read_pfm(tmp_path("w.pfm"));
  REQUIRE(back.width == 3);
  REQUIRE(back.height == 2);
  for (int j = 0; j < 2; ++j)
    for (int i = 0; i < 3; ++i)
      CHECK(back.at(i, j).mean == static_cast<float>(img.at(i, j).mean));
  std::remove(tmp_path("w.pfm").c_str());
}

TEST_CASE("png of a constant image has constant pixels") {
  SolutionImage img = make_image(5, 4, Bbox{{0, 0}, {1, 1}});
  for (auto& c : img.cells) c.mean = 0.7;
  write_png(img, tmp_path("w.png"));
  std::string bytes = slurp(tmp_path("w.png"));
  REQUIRE(bytes.size() > 50);
  CHECK(bytes.substr(1, 3) == "PNG");

  // locate IDAT, inflate, check the filtered raster
  size_t idat = bytes.find("IDAT");
  REQUIRE(idat != std::string::npos);
  uint32_t len = (static_cast<unsigned char>(bytes[idat - 4]) << 24) |
                 (static_cast<unsigned char>(bytes[idat - 3]) << 16) |
                 (static_cast<unsigned char>(bytes[idat - 2]) << 8) |
                 static_cast<unsigned char>(bytes[idat - 1]);
  std::string raster(4 * (5 + 1), '\0');
  uLongf out_len = raster.size();
  REQUIRE(uncompress(reinterpret_cast<Bytef*>(raster.data()), &out_len,
                     reinterpret_cast<const Bytef*>(bytes.data() + idat + 4),
                     len) == Z_OK);
  REQUIRE(out_len == raster.size());
  for (int j = 0; j < 4; ++j) {
    CHECK(raster[j * 6] == 0);  // filter byte
    for (int i = 1; i <= 5; ++i)
      CHECK(raster[j * 6 + i] == raster[1]);
  }
  // tonemap sidecar records the range
  CHECK(slurp(tmp_path("w.png") + ".json").find("tonemap") !=
        std::string::npos);
  std::remove(tmp_path("w.png").c_str());
  std::remove((tmp_path("w.png") + ".json").c_str());
}

TEST_CASE("field checkpoints flow through run_solve") {
  RunConfig cfg = base_config("neumann-strip");
  cfg.mode = SamplerMode::LearnableMis;
  cfg.train_until = 2;
  cfg.field_out = tmp_path("field.bin");
  RunResult res = run_solve(cfg);
  std::ifstream in(tmp_path("field.bin"), std::ios::binary);
  GuidingField loaded = GuidingField::load(in);
  CHECK(loaded.bit_equal(*res.field));
  std::remove(tmp_path("field.bin").c_str());
}

TEST_CASE("run config parsing and validation") {
  RunConfig cfg = parse_run_config(R"({
    "preset": "curves",
    "grid": {"width": 32, "height": 16},
    "wpp": 7,
    "sampler": "fixed_mis",
    "fixed_c": 0.25,
    "train_until": 64,
    "k": 4,
    "seed": 42,
    "train": {"lr": 0.005, "max_records": 1000},
    "solver": {"rr_depth": 64, "reflect": false}
  })");
  CHECK(cfg.preset == "curves");
  CHECK(cfg.grid.width == 32);
  CHECK(cfg.grid.height == 16);
  CHECK(cfg.wpp == 7);
  CHECK(cfg.mode == SamplerMode::FixedMis);
  CHECK(cfg.fixed_c == 0.25);
  CHECK(cfg.field.mixture_k == 4);
  CHECK(cfg.train.lr == 0.005);
  CHECK(cfg.train.max_records_per_round == 1000);
  CHECK(cfg.solver.rr_depth == 64);
  CHECK(!cfg.solver.reflect_at_neumann);

  CHECK_THROWS(parse_run_config(R"({"preset":"curves","wpp":0})"));
  CHECK_THROWS(parse_run_config(R"({"preset":"curves","fixed_c":1.5})"));
  CHECK_THROWS(parse_run_config("not json"));
  CHECK_THROWS(run_solve(parse_run_config(R"({"wpp":1})")));  // no problem
}

TEST_CASE("relMSE improves from 64 to 1024 wpp for every mode and preset") {
  for (const char* preset :
       {"harmonic-disk", "const-source-disk", "neumann-strip"}) {
    CAPTURE(preset);
    RunConfig cfg = base_config(preset);
    cfg.grid.width = cfg.grid.height = 4;
    SolutionImage ref = generate_reference(cfg, 1);  // analytic
    for (SamplerMode mode :
         {SamplerMode::Uniform, SamplerMode::FixedMis, SamplerMode::GuidingOnly,
          SamplerMode::LearnableMis}) {
      CAPTURE(sampler_mode_name(mode));
      cfg.mode = mode;
      cfg.wpp = 1024;
      cfg.train_until = 256;
      cfg.train.max_records_per_round = 2048;
      // the per-wpp log of one run carries both checkpoints
      auto rows = run_ablation(cfg, {mode}, ref);
      double r64 = rows[0].log[63].relmse;
      double r1024 = rows[0].log[1023].relmse;
      CHECK(r1024 < r64);
    }
  }
}
