#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "wost/rng.hpp"
#include "wost/sphdist.hpp"

using namespace wost;

namespace {

Vec3 dir2(double angle) { return {std::cos(angle), std::sin(angle), 0.0}; }

double angle_of(Vec3 v) { return std::atan2(v.y, v.x); }

MixtureParams random_mixture(Rng& rng, int k, int dim) {
  UnnormParams raw;
  raw.k = k;
  raw.dim = dim;
  for (int i = 0; i < k; ++i) {
    for (int a = 0; a < dim; ++a) raw.mu_raw[i][a] = rng.uniform(-1.5, 1.5);
    if (std::abs(raw.mu_raw[i][0]) < 0.1) raw.mu_raw[i][0] = 0.3;
    raw.kappa_raw[i] = rng.uniform(std::log(0.05), std::log(50.0));
    raw.lambda_raw[i] = rng.uniform(-2.0, 2.0);
  }
  raw.c_raw = rng.uniform(-2.0, 2.0);
  return normalize_params(raw);
}

UnnormParams random_raw(Rng& rng, int k, int dim) {
  UnnormParams raw;
  raw.k = k;
  raw.dim = dim;
  for (int i = 0; i < k; ++i) {
    for (int a = 0; a < dim; ++a) raw.mu_raw[i][a] = rng.uniform(-1.5, 1.5);
    double n2 = 0;
    for (int a = 0; a < dim; ++a) n2 += raw.mu_raw[i][a] * raw.mu_raw[i][a];
    if (n2 < 0.09) raw.mu_raw[i][0] += 0.5;  // stay away from the norm floor
    raw.kappa_raw[i] = rng.uniform(std::log(0.05), std::log(50.0));
    raw.lambda_raw[i] = rng.uniform(-2.0, 2.0);
  }
  raw.c_raw = rng.uniform(-2.0, 2.0);
  return raw;
}

// solve vmf_pdf(mu|mu,kappa) = value for kappa (d=2) by bisection
double kappa_for_peak(double value) {
  double lo = 1e-6, hi = 500.0;
  for (int i = 0; i < 200; ++i) {
    double mid = 0.5 * (lo + hi);
    VmfComponent c{{1, 0, 0}, mid, 1.0};
    if (vmf_pdf({1, 0, 0}, c, 2) < value)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("Bessel I0 and I1/I0 reference values") {
  // reference values from the defining series evaluated independently
  CHECK(bessel_i0(1.0) == doctest::Approx(1.2660658777520084).epsilon(1e-10));
  CHECK(bessel_i0(10.0) == doctest::Approx(2815.7166284662544).epsilon(1e-10));
  CHECK(bessel_i0(50.0) ==
        doctest::Approx(2.9325537838493457e20).epsilon(1e-9));
  CHECK(std::exp(log_bessel_i0(100.0)) ==
        doctest::Approx(1.0737517071310738e42).epsilon(1e-9));
  CHECK(bessel_i1_over_i0(1.0) ==
        doctest::Approx(0.4463899658965345).epsilon(1e-10));
  CHECK(bessel_i1_over_i0(12.0) ==
        doctest::Approx(0.9573814053952422).epsilon(1e-9));
  CHECK(bessel_i1_over_i0(25.0) ==
        doctest::Approx(0.9797914534905159).epsilon(1e-9));
}

TEST_CASE("vmf_pdf closed-form values") {
  SUBCASE("kappa 0 is exactly uniform") {
    VmfComponent c{{0, 1, 0}, 0.0, 1.0};
    CHECK(vmf_pdf(dir2(0.3), c, 2) == 1.0 / kTwoPi);
    CHECK(vmf_pdf({0, 0, 1}, c, 3) == 1.0 / kFourPi);
  }
  SUBCASE("d=2 peak value at kappa 1") {
    VmfComponent c{{1, 0, 0}, 1.0, 1.0};
    CHECK(vmf_pdf({1, 0, 0}, c, 2) ==
          doctest::Approx(std::exp(1.0) / (kTwoPi * 1.2660658777520084))
              .epsilon(1e-10));
    CHECK(vmf_pdf({1, 0, 0}, c, 2) == doctest::Approx(0.341710).epsilon(1e-5));
  }
  SUBCASE("d=3 peak value at kappa 2") {
    VmfComponent c{{0, 0, 1}, 2.0, 1.0};
    double expected = 2.0 * std::exp(2.0) / (kFourPi * std::sinh(2.0));
    CHECK(vmf_pdf({0, 0, 1}, c, 3) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(vmf_pdf({0, 0, 1}, c, 3) == doctest::Approx(0.324236).epsilon(1e-5));
  }
  SUBCASE("huge kappa stays finite via log-space evaluation") {
    VmfComponent c{{1, 0, 0}, 9000.0, 1.0};
    double peak = vmf_pdf({1, 0, 0}, c, 2);
    CHECK(std::isfinite(peak));
    CHECK(peak > 1.0);
    CHECK(vmf_pdf(dir2(kPi), c, 2) >= 0.0);
  }
  SUBCASE("pdf integrates to one (d=2, sweep of kappas)") {
    for (double kappa : {0.0, 0.5, 5.0, 80.0, 2000.0}) {
      VmfComponent c{dir2(0.7), kappa, 1.0};
      double total = oracle::integrate_circle(
          [&](double a) { return vmf_pdf(dir2(a), c, 2); }, 1 << 18);
      CHECK(total == doctest::Approx(1.0).epsilon(kappa > 500 ? 1e-4 : 1e-7));
    }
  }
}

TEST_CASE("vmf_sample distributions") {
  SUBCASE("kappa 0 is uniform (mean resultant length)") {
    for (int dim : {2, 3}) {
      VmfComponent c{{1, 0, 0}, 0.0, 1.0};
      Rng rng(42, dim);
      Vec3 sum{};
      const int n = 1000000;
      for (int i = 0; i < n; ++i) sum = sum + vmf_sample(rng, c, dim);
      CHECK(norm(sum) / n < 0.005);
    }
  }
  SUBCASE("d=2 kappa 50 concentrates within 0.4 rad") {
    VmfComponent c{dir2(1.1), 50.0, 1.0};
    Rng rng(43, 0);
    const int n = 1000000;
    int inside = 0;
    for (int i = 0; i < n; ++i) {
      Vec3 v = vmf_sample(rng, c, 2);
      double cosang = std::clamp(dot(v, c.mu), -1.0, 1.0);
      if (std::acos(cosang) < 0.4) ++inside;
    }
    // quadrature of the pdf over the cap gives the expected fraction
    double expected =
        oracle::integrate_circle([&](double a) {
          Vec3 v = dir2(a);
          return std::acos(std::clamp(dot(v, c.mu), -1.0, 1.0)) < 0.4
                     ? vmf_pdf(v, c, 2)
                     : 0.0;
        });
    CHECK(expected > 0.99);
    CHECK(static_cast<double>(inside) / n ==
          doctest::Approx(expected).epsilon(2e-3));
    CHECK(inside >= static_cast<int>(0.99 * n));
  }
  SUBCASE("d=3 kappa 10: cos-angle histogram vs analytic marginal") {
    VmfComponent c{normalized(Vec3{0.3, -0.5, 0.8}), 10.0, 1.0};
    Rng rng(44, 0);
    const int n = 1000000, bins = 64;
    std::vector<double> obs(bins, 0.0), exp_mass(bins, 0.0);
    for (int i = 0; i < n; ++i) {
      double t = std::clamp(dot(vmf_sample(rng, c, 3), c.mu), -1.0, 1.0);
      int b = std::min(static_cast<int>((t + 1.0) * 0.5 * bins), bins - 1);
      obs[b] += 1.0;
    }
    double k = c.kappa;
    for (int b = 0; b < bins; ++b) {
      double t0 = -1.0 + 2.0 * b / bins, t1 = -1.0 + 2.0 * (b + 1) / bins;
      // integral of kappa e^{kappa t} / (2 sinh kappa)
      exp_mass[b] =
          n * (std::exp(k * (t1 - 1.0)) - std::exp(k * (t0 - 1.0))) /
          (1.0 - std::exp(-2.0 * k));
    }
    CHECK(oracle::histogram_close(obs, exp_mass, 0.02));
  }
}

TEST_CASE("mixture pdf and sampling") {
  SUBCASE("K=1 equals the component, including the rng stream") {
    Rng rng_a(7, 7), rng_b(7, 7);
    MixtureParams m;
    m.k = 1;
    m.dim = 2;
    m.comps[0] = {dir2(0.4), 3.0, 1.0};
    for (int i = 0; i < 100; ++i) {
      Vec3 a = mixture_sample(rng_a, m);
      Vec3 b = vmf_sample(rng_b, m.comps[0], 2);
      CHECK(a == b);
      CHECK(mixture_pdf(a, m) == vmf_pdf(a, m.comps[0], 2));
    }
  }
  SUBCASE("two uniform components stay uniform") {
    MixtureParams m;
    m.k = 2;
    m.dim = 2;
    m.comps[0] = {dir2(0.0), 0.0, 0.5};
    m.comps[1] = {dir2(2.0), 0.0, 0.5};
    CHECK(mixture_pdf(dir2(1.23), m) == doctest::Approx(1.0 / kTwoPi));
  }
  SUBCASE("degenerate weights always pick the dominant component") {
    MixtureParams m;
    m.k = 2;
    m.dim = 2;
    m.comps[0] = {dir2(0.0), 400.0, 1.0 - 1e-9};
    m.comps[1] = {dir2(kPi), 400.0, 1e-9};
    Rng rng(5, 5);
    for (int i = 0; i < 10000; ++i) {
      Vec3 v = mixture_sample(rng, m);
      CHECK(dot(v, m.comps[0].mu) > 0.0);
    }
  }
  SUBCASE("K=8 random mixtures integrate to one (2^16-bin trapezoid)") {
    Rng rng(11, 0);
    for (int trial = 0; trial < 20; ++trial) {
      MixtureParams m = random_mixture(rng, 8, 2);
      double total = oracle::integrate_circle(
          [&](double a) { return mixture_pdf(dir2(a), m); });
      CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
  SUBCASE("K=4 sampler matches its pdf (64-bin angular histogram)") {
    Rng rng(12, 0);
    MixtureParams m = random_mixture(rng, 4, 2);
    const int n = 1000000, bins = 64;
    std::vector<double> obs(bins, 0.0), expd(bins, 0.0);
    Rng srng(13, 1);
    for (int i = 0; i < n; ++i) {
      double a = angle_of(mixture_sample(srng, m));
      int b = static_cast<int>((a + kPi) / kTwoPi * bins);
      obs[std::clamp(b, 0, bins - 1)] += 1.0;
    }
    for (int b = 0; b < bins; ++b) {
      double mass = 0.0;
      for (int s = 0; s < 64; ++s) {
        double a = -kPi + (b + (s + 0.5) / 64.0) * (kTwoPi / bins);
        mass += mixture_pdf(dir2(a), m);
      }
      expd[b] = n * mass * (kTwoPi / bins / 64.0);
    }
    CHECK(oracle::histogram_close(obs, expd, 0.03));
  }
}

TEST_CASE("reflected density at a Neumann boundary") {
  Vec3 n{0, 1, 0};
  SUBCASE("uniform mixture doubles above, vanishes below") {
    MixtureParams m;
    m.k = 1;
    m.dim = 2;
    m.comps[0] = {dir2(0.3), 0.0, 1.0};
    CHECK(reflected_pdf(dir2(0.5), m, n) == doctest::Approx(1.0 / kPi));
    CHECK(reflected_pdf(dir2(-0.5), m, n) == 0.0);
    CHECK(reflected_pdf(dir2(0.0), m, n) == 0.0);  // exactly tangent
  }
  SUBCASE("tangent-symmetric mixture gives exactly 2V above") {
    MixtureParams m;
    m.k = 2;
    m.dim = 2;
    m.comps[0] = {dir2(0.7), 4.0, 0.5};
    m.comps[1] = {dir2(-0.7), 4.0, 0.5};  // mirror image below the tangent
    Vec3 nu = dir2(0.9);
    CHECK(reflected_pdf(nu, m, n) ==
          doctest::Approx(2.0 * mixture_pdf(nu, m)).epsilon(1e-12));
  }
  SUBCASE("hemispherical quadrature integrates to one") {
    Rng rng(21, 0);
    for (int trial = 0; trial < 20; ++trial) {
      MixtureParams m = random_mixture(rng, 8, 2);
      double a0 = rng.uniform(0.0, kTwoPi);
      Vec3 nn = dir2(a0);
      // integrate over the support arc (the open upper half circle)
      double total = oracle::integrate_arc(
          [&](double a) { return reflected_pdf(dir2(a), m, nn); },
          a0 - kPi / 2, a0 + kPi / 2);
      CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
  SUBCASE("pure reflection of a downward draw") {
    CHECK(reflect_off_plane({0, -1, 0}, n) == Vec3{0, 1, 0});
    MixtureParams m;
    m.k = 1;
    m.dim = 2;
    m.comps[0] = {dir2(-kPi / 2), 800.0, 1.0};  // concentrated straight down
    Rng rng(22, 0);
    for (int i = 0; i < 1000; ++i) {
      Vec3 v = reflected_sample(rng, m, n);
      CHECK(dot(v, n) > 0.0);
      CHECK(v.y > 0.9);  // lands around +y after reflection
    }
  }
  SUBCASE("sampler matches reflected_pdf on the upper half circle") {
    Rng rng(23, 0);
    MixtureParams m = random_mixture(rng, 4, 2);
    const int bins = 64, nsamp = 1000000;
    std::vector<double> obs(bins, 0.0), expd(bins, 0.0);
    Rng srng(24, 1);
    for (int i = 0; i < nsamp; ++i) {
      double a = angle_of(reflected_sample(srng, m, n));  // in (0, pi)
      int b = static_cast<int>(a / kPi * bins);
      obs[std::clamp(b, 0, bins - 1)] += 1.0;
    }
    for (int b = 0; b < bins; ++b) {
      double mass = 0.0;
      for (int s = 0; s < 64; ++s) {
        double a = (b + (s + 0.5) / 64.0) * (kPi / bins);
        mass += reflected_pdf(dir2(a), m, n);
      }
      expd[b] = nsamp * mass * (kPi / bins / 64.0);
    }
    CHECK(oracle::histogram_close(obs, expd, 0.03));
  }
}

TEST_CASE("uniform directional pdf") {
  Vec3 n{0, 1, 0};
  CHECK(uniform_dir_pdf(dir2(0.4), nullptr, 2) == 1.0 / kTwoPi);
  CHECK(uniform_dir_pdf({0, 1, 0}, &n, 2) == 1.0 / kPi);
  CHECK(uniform_dir_pdf({0, -1, 0}, &n, 2) == 0.0);
  CHECK(uniform_dir_pdf({1, 0, 0}, &n, 2) == 0.0);  // tangent excluded
  CHECK(uniform_dir_pdf({0, 0, 1}, nullptr, 3) == 1.0 / kFourPi);
}

TEST_CASE("MIS pdf and sampling") {
  SUBCASE("identical components collapse to the uniform density") {
    MixtureParams m;
    m.k = 1;
    m.dim = 2;
    m.comps[0] = {dir2(0.1), 0.0, 1.0};
    m.c = 0.5;
    CHECK(mis_pdf(dir2(2.0), m, nullptr) ==
          doctest::Approx(1.0 / kTwoPi).epsilon(1e-12));
  }
  SUBCASE("formula arithmetic against hand-solved densities") {
    // engineer p_g = 0.5 at the mixture peak, then c p_g + (1-c) p_u
    MixtureParams m;
    m.k = 1;
    m.dim = 2;
    m.comps[0] = {dir2(0.0), kappa_for_peak(0.5), 1.0};
    m.c = 0.3;
    double expected = 0.3 * 0.5 + 0.7 / kTwoPi;
    CHECK(expected == doctest::Approx(0.261408).epsilon(1e-5));
    CHECK(mis_pdf(dir2(0.0), m, nullptr) ==
          doctest::Approx(expected).epsilon(1e-8));
  }
  SUBCASE("invalid half space on a Neumann boundary has zero density") {
    Rng rng(31, 0);
    MixtureParams m = random_mixture(rng, 8, 2);
    Vec3 n{0, 1, 0};
    for (int i = 0; i < 64; ++i) {
      Vec3 nu = dir2(-kPi + i * kPi / 64.0);  // lower half circle
      if (dot(nu, n) > 0.0) continue;
      CHECK(mis_pdf(nu, m, &n) == 0.0);
    }
    double total = oracle::integrate_arc(
        [&](double a) { return mis_pdf(dir2(a), m, &n); }, 0.0, kPi);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
  }
  SUBCASE("c limits select a single technique") {
    Rng rng(32, 0);
    MixtureParams m = random_mixture(rng, 4, 2);
    m.c = 0.0;
    for (int i = 0; i < 200; ++i) {
      MisSample s = mis_sample(rng, m, nullptr);
      CHECK(!s.guided);
      CHECK(s.pdf_mis == doctest::Approx(s.pdf_u));
    }
    m.c = 1.0 - 1e-9;
    for (int i = 0; i < 200; ++i) CHECK(mis_sample(rng, m, nullptr).guided);
  }
  SUBCASE("uniform mixture at c=0.5 samples the circle uniformly") {
    MixtureParams m;
    m.k = 1;
    m.dim = 2;
    m.comps[0] = {dir2(0.2), 0.0, 1.0};
    m.c = 0.5;
    Rng rng(33, 0);
    const int n = 1000000, bins = 64;
    std::vector<double> obs(bins, 0.0), expd(bins, n / 64.0);
    for (int i = 0; i < n; ++i) {
      double a = angle_of(mis_sample(rng, m, nullptr).nu);
      int b = static_cast<int>((a + kPi) / kTwoPi * bins);
      obs[std::clamp(b, 0, bins - 1)] += 1.0;
    }
    CHECK(oracle::histogram_close(obs, expd, 0.02));
  }
  SUBCASE("returned pdf always matches mis_pdf at the sample") {
    Rng rng(34, 0);
    for (int trial = 0; trial < 10; ++trial) {
      MixtureParams m = random_mixture(rng, 8, 2);
      Vec3 n = dir2(rng.uniform(0.0, kTwoPi));
      for (int i = 0; i < 200; ++i) {
        MisSample s = mis_sample(rng, m, &n);
        CHECK(s.pdf_mis == doctest::Approx(mis_pdf(s.nu, m, &n)).epsilon(1e-12));
        CHECK(s.pdf_mis > 0.0);
      }
    }
  }
}

TEST_CASE("mixture_grad matches finite differences") {
  SUBCASE("K=1 lambda logit has zero gradient") {
    Rng rng(41, 0);
    UnnormParams raw = random_raw(rng, 1, 2);
    ParamGrad g;
    g.clear(1);
    mixture_grad(dir2(0.3), raw, g);
    CHECK(g.lambda_raw[0] == 0.0);
  }

  for (int dim : {2, 3}) {
    CAPTURE(dim);
    Rng rng(42 + dim, 0);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      int k = 1 + static_cast<int>(rng.uniform_index(8));
      UnnormParams raw = random_raw(rng, k, dim);
      Vec3 nu = dim == 2 ? dir2(rng.uniform(0.0, kTwoPi))
                         : normalized(Vec3{rng.uniform(-1, 1),
                                           rng.uniform(-1, 1),
                                           rng.uniform(-1, 1)});
      ParamGrad g;
      g.clear(k);
      mixture_grad(nu, raw, g);

      std::vector<double> analytic, fd;
      const double h = 1e-4;
      auto probe = [&](double* slot, double ga) {
        double saved = *slot;
        *slot = saved + h;
        double fp = mixture_pdf(nu, normalize_params(raw));
        *slot = saved - h;
        double fm = mixture_pdf(nu, normalize_params(raw));
        *slot = saved;
        analytic.push_back(ga);
        fd.push_back((fp - fm) / (2.0 * h));
      };
      for (int i = 0; i < k; ++i) {
        for (int a = 0; a < dim; ++a)
          probe(&raw.mu_raw[i][a], g.mu_raw[i][a]);
        probe(&raw.kappa_raw[i], g.kappa_raw[i]);
        probe(&raw.lambda_raw[i], g.lambda_raw[i]);
      }
      worst = std::max(worst, oracle::grad_max_rel_err(analytic, fd));
    }
    CHECK(worst < 1e-3);
  }
}

TEST_CASE("normalize_params applies the mapping table") {
  UnnormParams raw;
  raw.k = 2;
  raw.dim = 2;
  raw.mu_raw[0] = {3.0, 4.0, 0.0};
  raw.mu_raw[1] = {0.0, 0.0, 0.0};  // norm floor fallback
  raw.kappa_raw[0] = 0.0;
  raw.kappa_raw[1] = 100.0;  // clamped at the cap
  raw.lambda_raw[0] = 1.0;
  raw.lambda_raw[1] = 1.0;
  raw.c_raw = 0.0;
  MixtureParams m = normalize_params(raw);
  CHECK(m.comps[0].mu.x == doctest::Approx(0.6));
  CHECK(m.comps[0].mu.y == doctest::Approx(0.8));
  CHECK(norm(m.comps[1].mu) == doctest::Approx(1.0));
  CHECK(m.comps[0].kappa == doctest::Approx(1.0));
  CHECK(m.comps[1].kappa == kKappaMax);
  CHECK(m.comps[0].lambda == doctest::Approx(0.5));
  CHECK(m.comps[0].lambda + m.comps[1].lambda == doctest::Approx(1.0));
  CHECK(m.c == doctest::Approx(0.5));
}

TEST_CASE("d=3 mixture normalization by sphere quadrature") {
  Rng rng(51, 0);
  for (int trial = 0; trial < 5; ++trial) {
    MixtureParams m = random_mixture(rng, 8, 3);
    double total =
        oracle::integrate_sphere([&](Vec3 v) { return mixture_pdf(v, m); });
    CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
  }
}
