#pragma once

#include <array>

#include "wost/rng.hpp"
#include "wost/vec.hpp"

namespace wost {

// von Mises-Fisher distributions and mixtures on S^1 and S^2: sampling,
// densities, analytic raw-parameter gradients, tangent-plane reflection at
// Neumann boundaries and one-sample MIS with the uniform density.
//
// Directions are Vec3 everywhere; dim == 2 keeps z at zero.

inline constexpr int kMaxMixtureComponents = 16;
inline constexpr double kKappaMin = 1e-6;
inline constexpr double kKappaMax = 1e4;

struct VmfComponent {
  Vec3 mu{1.0, 0.0, 0.0};
  double kappa = 0.0;
  double lambda = 1.0;
};

struct MixtureParams {
  std::array<VmfComponent, kMaxMixtureComponents> comps;
  int k = 1;
  double c = 0.5;  // selection probability of the guided technique
  int dim = 2;
  // per-component log normalizer cache: v_i(nu) = exp(kappa_i mu_i.nu + a_i).
  // Zero means "not computed" (true normalizers are strictly negative);
  // normalize_params fills it, hand-built mixtures fall back to vmf_pdf.
  std::array<double, kMaxMixtureComponents> log_a{};
};

// fills the log-normalizer cache of a hand-built mixture
void refresh_norm_cache(MixtureParams& params);

// Raw neural-field outputs before the normalization mappings
// (mu = mu'/|mu'|, kappa = exp(kappa'), lambda = softmax(lambda'),
// c = sigmoid(c')).
struct UnnormParams {
  std::array<std::array<double, 3>, kMaxMixtureComponents> mu_raw{};
  std::array<double, kMaxMixtureComponents> kappa_raw{};
  std::array<double, kMaxMixtureComponents> lambda_raw{};
  double c_raw = 0.0;
  int k = 1;
  int dim = 2;

  static int param_count(int k, int dim) { return (2 + dim) * k + 1; }
};

// Gradient with respect to every raw parameter, shaped like UnnormParams.
struct ParamGrad {
  std::array<std::array<double, 3>, kMaxMixtureComponents> mu_raw{};
  std::array<double, kMaxMixtureComponents> kappa_raw{};
  std::array<double, kMaxMixtureComponents> lambda_raw{};
  double c_raw = 0.0;

  void clear(int k) {
    for (int i = 0; i < k; ++i) {
      mu_raw[i] = {0.0, 0.0, 0.0};
      kappa_raw[i] = 0.0;
      lambda_raw[i] = 0.0;
    }
    c_raw = 0.0;
  }
  void add_scaled(const ParamGrad& o, double s, int k) {
    for (int i = 0; i < k; ++i) {
      for (int a = 0; a < 3; ++a) mu_raw[i][a] += s * o.mu_raw[i][a];
      kappa_raw[i] += s * o.kappa_raw[i];
      lambda_raw[i] += s * o.lambda_raw[i];
    }
    c_raw += s * o.c_raw;
  }
};

// modified Bessel I0/I1; relative error below 1e-10 over [0, kKappaMax]
double bessel_i0(double x);
double log_bessel_i0(double x);
double bessel_i1_over_i0(double x);

double surface_area_sphere(int dim);  // |S^{d-1}|: 2*pi or 4*pi

double vmf_pdf(Vec3 nu, const VmfComponent& comp, int dim);
Vec3 vmf_sample(Rng& rng, const VmfComponent& comp, int dim);

double mixture_pdf(Vec3 nu, const MixtureParams& params);
Vec3 mixture_sample(Rng& rng, const MixtureParams& params);

// Guiding density on a Neumann boundary with inward normal n: zero on the
// closed lower hemisphere, V(nu) + V(reflect(nu)) above.
double reflected_pdf(Vec3 nu, const MixtureParams& params, Vec3 n);
Vec3 reflected_sample(Rng& rng, const MixtureParams& params, Vec3 n);

// uniform directional density; n != nullptr selects the hemisphere form
double uniform_dir_pdf(Vec3 nu, const Vec3* n, int dim);
Vec3 uniform_dir_sample(Rng& rng, const Vec3* n, int dim);

double mis_pdf(Vec3 nu, const MixtureParams& params, const Vec3* n,
               bool reflect = true);

struct MisSample {
  Vec3 nu;
  double pdf_mis = 0.0;
  double pdf_g = 0.0;
  double pdf_u = 0.0;
  bool guided = false;
};

// One-sample MIS: guided technique with probability params.c, uniform
// otherwise; pdf fields evaluate the full mixture density at the sample.
MisSample mis_sample(Rng& rng, const MixtureParams& params, const Vec3* n,
                     bool reflect = true);

// Applies the normalization mappings (with the kappa clamp); zero-norm raw
// means fall back to fixed unit vectors.
MixtureParams normalize_params(const UnnormParams& raw);

// d V(nu | Theta(Theta')) / d Theta' by chain rule through the mappings.
// Accumulates into grad (does not clear it); returns V itself.
double mixture_grad(Vec3 nu, const UnnormParams& raw, ParamGrad& grad);

// Same for the reflected density V(nu) + V(nu - 2(nu.n)n), nu.n > 0.
double mixture_grad_reflected(Vec3 nu, Vec3 n, const UnnormParams& raw,
                              ParamGrad& grad);

inline Vec3 reflect_off_plane(Vec3 nu, Vec3 n) {
  return nu - 2.0 * dot(nu, n) * n;
}

}  // namespace wost
