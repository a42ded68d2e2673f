#include "wost/sphdist.hpp"

#include <cassert>
#include <cmath>

namespace wost {

namespace {

constexpr double kSeriesCut = 20.0;

struct SeriesTables {
  double inv_m2[201];   // 1 / m^2
  double inv_mm1[201];  // 1 / (m (m+1))
  SeriesTables() {
    inv_m2[0] = inv_mm1[0] = 0.0;
    for (int m = 1; m <= 200; ++m) {
      inv_m2[m] = 1.0 / (static_cast<double>(m) * m);
      inv_mm1[m] = 1.0 / (static_cast<double>(m) * (m + 1));
    }
  }
};
const SeriesTables kTables;

// power series sum_m (x^2/4)^m / (m!)^2, valid below kSeriesCut
double i0_series(double x) {
  double q = 0.25 * x * x;
  double term = 1.0, sum = 1.0;
  for (int m = 1; m < 200; ++m) {
    term *= q * kTables.inv_m2[m];
    sum += term;
    if (term < 1e-17 * sum) break;
  }
  return sum;
}

double i1_series(double x) {
  double q = 0.25 * x * x;
  double term = 0.5 * x, sum = term;
  for (int m = 1; m < 200; ++m) {
    term *= q * kTables.inv_mm1[m];
    sum += term;
    if (term < 1e-17 * sum) break;
  }
  return sum;
}

// asymptotic correction: I_nu(x) ~ e^x / sqrt(2 pi x) * corr(x)
double i_asymptotic_corr(double x, double mu /* = 4 nu^2 */) {
  double sum = 1.0, term = 1.0;
  double prev = kInf;
  for (int k = 1; k < 30; ++k) {
    term *= -(mu - (2.0 * k - 1.0) * (2.0 * k - 1.0)) / (8.0 * x * k);
    if (std::abs(term) >= prev) break;  // divergent tail of the series
    sum += term;
    prev = std::abs(term);
    if (std::abs(term) < 1e-16 * std::abs(sum)) break;
  }
  return sum;
}

}  // namespace

double bessel_i0(double x) {
  if (x < kSeriesCut) return i0_series(x);
  return std::exp(x) / std::sqrt(kTwoPi * x) * i_asymptotic_corr(x, 0.0);
}

double log_bessel_i0(double x) {
  if (x < kSeriesCut) return std::log(i0_series(x));
  return x - 0.5 * std::log(kTwoPi * x) + std::log(i_asymptotic_corr(x, 0.0));
}

double bessel_i1_over_i0(double x) {
  if (x == 0.0) return 0.0;
  if (x < kSeriesCut) return i1_series(x) / i0_series(x);
  return i_asymptotic_corr(x, 4.0) / i_asymptotic_corr(x, 0.0);
}

double surface_area_sphere(int dim) { return dim == 2 ? kTwoPi : kFourPi; }

double vmf_pdf(Vec3 nu, const VmfComponent& comp, int dim) {
  if (comp.kappa == 0.0) return 1.0 / surface_area_sphere(dim);
  double t = dot(nu, comp.mu);
  if (dim == 2) {
    // exp(kappa t) / (2 pi I0(kappa)), evaluated in log space
    return std::exp(comp.kappa * t - log_bessel_i0(comp.kappa)) / kTwoPi;
  }
  // kappa exp(kappa (t-1)) / (2 pi (1 - exp(-2 kappa)))
  double k = comp.kappa;
  return k * std::exp(k * (t - 1.0)) / (kTwoPi * (1.0 - std::exp(-2.0 * k)));
}

namespace {

// rotate the canonical 2D frame so +x maps onto mu
Vec3 rotate_to_frame2(double cos_a, double sin_a, Vec3 mu) {
  return {cos_a * mu.x - sin_a * mu.y, cos_a * mu.y + sin_a * mu.x, 0.0};
}

void basis_around(Vec3 w, Vec3* u, Vec3* v) {
  // branchless orthonormal basis (Duff et al.)
  double sign = std::copysign(1.0, w.z);
  double a = -1.0 / (sign + w.z);
  double b = w.x * w.y * a;
  *u = {1.0 + sign * w.x * w.x * a, sign * b, -sign * w.x};
  *v = {b, sign + w.y * w.y * a, -w.y};
}

// Best & Fisher rejection sampler for the von Mises angle around the mean
double sample_vm_angle(Rng& rng, double kappa) {
  double tau = 1.0 + std::sqrt(1.0 + 4.0 * kappa * kappa);
  double rho = (tau - std::sqrt(2.0 * tau)) / (2.0 * kappa);
  double r = (1.0 + rho * rho) / (2.0 * rho);
  for (;;) {
    double u1 = rng.uniform_pos();
    double z = std::cos(kPi * u1);
    double f = (1.0 + r * z) / (r + z);
    double cv = kappa * (r - f);
    double u2 = rng.uniform_pos();
    if (cv * (2.0 - cv) - u2 > 0.0 ||
        std::log(cv / u2) + 1.0 - cv >= 0.0) {
      double u3 = rng.uniform();
      double theta = std::acos(std::clamp(f, -1.0, 1.0));
      return u3 < 0.5 ? -theta : theta;
    }
  }
}

}  // namespace

Vec3 vmf_sample(Rng& rng, const VmfComponent& comp, int dim) {
  if (dim == 2) {
    if (comp.kappa == 0.0) {
      double a = kTwoPi * rng.uniform();
      return rotate_to_frame2(std::cos(a), std::sin(a), comp.mu);
    }
    double theta = sample_vm_angle(rng, comp.kappa);
    return rotate_to_frame2(std::cos(theta), std::sin(theta), comp.mu);
  }

  double k = comp.kappa;
  double cos_t;
  if (k == 0.0) {
    cos_t = 1.0 - 2.0 * rng.uniform();
  } else {
    // exact inverse CDF of the cos-angle marginal, numerically stable form
    double u = rng.uniform_pos();
    cos_t = 1.0 + std::log(u + (1.0 - u) * std::exp(-2.0 * k)) / k;
    cos_t = std::clamp(cos_t, -1.0, 1.0);
  }
  double sin_t = std::sqrt(std::max(0.0, 1.0 - cos_t * cos_t));
  double phi = kTwoPi * rng.uniform();
  Vec3 u_axis, v_axis;
  basis_around(comp.mu, &u_axis, &v_axis);
  return sin_t * std::cos(phi) * u_axis + sin_t * std::sin(phi) * v_axis +
         cos_t * comp.mu;
}

namespace {

double component_log_norm(double kappa, int dim) {
  if (dim == 2) return -log_bessel_i0(kappa) - std::log(kTwoPi);
  if (kappa == 0.0) return -std::log(kFourPi);
  return std::log(kappa) - kappa -
         std::log(kTwoPi * (1.0 - std::exp(-2.0 * kappa)));
}

}  // namespace

void refresh_norm_cache(MixtureParams& params) {
  for (int i = 0; i < params.k; ++i)
    params.log_a[i] = component_log_norm(params.comps[i].kappa, params.dim);
}

double mixture_pdf(Vec3 nu, const MixtureParams& params) {
  double sum = 0.0;
  for (int i = 0; i < params.k; ++i) {
    const VmfComponent& c = params.comps[i];
    double la = params.log_a[i];
    sum += la != 0.0 ? c.lambda * std::exp(c.kappa * dot(nu, c.mu) + la)
                     : c.lambda * vmf_pdf(nu, c, params.dim);
  }
  return sum;
}

Vec3 mixture_sample(Rng& rng, const MixtureParams& params) {
  int pick = 0;
  if (params.k > 1) {
    double u = rng.uniform();
    double acc = 0.0;
    pick = params.k - 1;
    for (int i = 0; i < params.k; ++i) {
      acc += params.comps[i].lambda;
      if (u < acc) {
        pick = i;
        break;
      }
    }
  }
  return vmf_sample(rng, params.comps[pick], params.dim);
}

double reflected_pdf(Vec3 nu, const MixtureParams& params, Vec3 n) {
  if (dot(nu, n) <= 0.0) return 0.0;
  return mixture_pdf(nu, params) +
         mixture_pdf(reflect_off_plane(nu, n), params);
}

Vec3 reflected_sample(Rng& rng, const MixtureParams& params, Vec3 n) {
  for (;;) {
    Vec3 nu = mixture_sample(rng, params);
    double d = dot(nu, n);
    if (d < 0.0) return reflect_off_plane(nu, n);
    if (d > 0.0) return nu;
    // d == 0 is excluded from the support; redraw
  }
}

double uniform_dir_pdf(Vec3 nu, const Vec3* n, int dim) {
  double inv_area = 1.0 / surface_area_sphere(dim);
  if (!n) return inv_area;
  return dot(nu, *n) > 0.0 ? 2.0 * inv_area : 0.0;
}

Vec3 uniform_dir_sample(Rng& rng, const Vec3* n, int dim) {
  for (;;) {
    Vec3 nu;
    if (dim == 2) {
      double a = kTwoPi * rng.uniform();
      nu = {std::cos(a), std::sin(a), 0.0};
    } else {
      double z = 1.0 - 2.0 * rng.uniform();
      double s = std::sqrt(std::max(0.0, 1.0 - z * z));
      double a = kTwoPi * rng.uniform();
      nu = {s * std::cos(a), s * std::sin(a), z};
    }
    if (!n) return nu;
    double d = dot(nu, *n);
    if (d > 0.0) return nu;
    if (d < 0.0) return -nu;  // fold onto the valid hemisphere
  }
}

double mis_pdf(Vec3 nu, const MixtureParams& params, const Vec3* n,
               bool reflect) {
  double pg = n ? (reflect ? reflected_pdf(nu, params, *n)
                           : mixture_pdf(nu, params))
                : mixture_pdf(nu, params);
  double pu = uniform_dir_pdf(nu, n, params.dim);
  return params.c * pg + (1.0 - params.c) * pu;
}

MisSample mis_sample(Rng& rng, const MixtureParams& params, const Vec3* n,
                     bool reflect) {
  MisSample out;
  out.guided = rng.uniform() < params.c;
  if (out.guided) {
    out.nu = n && reflect ? reflected_sample(rng, params, *n)
                          : mixture_sample(rng, params);
  } else {
    out.nu = uniform_dir_sample(rng, n, params.dim);
  }
  out.pdf_g = n ? (reflect ? reflected_pdf(out.nu, params, *n)
                           : mixture_pdf(out.nu, params))
                : mixture_pdf(out.nu, params);
  out.pdf_u = uniform_dir_pdf(out.nu, n, params.dim);
  out.pdf_mis = params.c * out.pdf_g + (1.0 - params.c) * out.pdf_u;
  return out;
}

namespace {

Vec3 fallback_mu(int index) {
  // deterministic spread used when a raw mean has (near-)zero norm
  double a = kTwoPi * index / kMaxMixtureComponents;
  return {std::cos(a), std::sin(a), 0.0};
}

double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                  : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace

MixtureParams normalize_params(const UnnormParams& raw) {
  MixtureParams out;
  out.k = raw.k;
  out.dim = raw.dim;
  out.c = sigmoid(raw.c_raw);

  double max_logit = -kInf;
  for (int i = 0; i < raw.k; ++i)
    max_logit = std::max(max_logit, raw.lambda_raw[i]);
  double z = 0.0;
  for (int i = 0; i < raw.k; ++i) z += std::exp(raw.lambda_raw[i] - max_logit);

  for (int i = 0; i < raw.k; ++i) {
    VmfComponent& c = out.comps[i];
    Vec3 m{raw.mu_raw[i][0], raw.mu_raw[i][1],
           raw.dim == 3 ? raw.mu_raw[i][2] : 0.0};
    double mn = norm(m);
    c.mu = mn < 1e-12 ? fallback_mu(i) : m / mn;
    c.kappa = std::clamp(std::exp(raw.kappa_raw[i]), kKappaMin, kKappaMax);
    c.lambda = std::exp(raw.lambda_raw[i] - max_logit) / z;
  }
  refresh_norm_cache(out);
  return out;
}

namespace {

// d/d kappa of log v(nu | mu, kappa) at t = mu.nu
double dlogv_dkappa(double t, double kappa, int dim) {
  if (dim == 2) return t - bessel_i1_over_i0(kappa);
  // 1/kappa + t - coth(kappa), with coth in a form stable for small kappa
  double e = std::expm1(-2.0 * kappa);  // e^-2k - 1
  double coth = 1.0 - 2.0 * (e + 1.0) / e;
  return 1.0 / kappa + t - coth;
}

// accumulates dV/dTheta' for one evaluated direction; returns V(nu)
double mixture_grad_one(Vec3 nu, const UnnormParams& raw,
                        const MixtureParams& params, ParamGrad& grad) {
  const int k = raw.k;
  double v[kMaxMixtureComponents];
  double value = 0.0;
  for (int i = 0; i < k; ++i) {
    const VmfComponent& c = params.comps[i];
    double la = params.log_a[i];
    v[i] = la != 0.0 ? std::exp(c.kappa * dot(nu, c.mu) + la)
                     : vmf_pdf(nu, c, raw.dim);
    value += c.lambda * v[i];
  }

  // lambda: dV/dlambda_j = v_j; softmax jacobian dlambda_j/dl'_i
  // contracts to lambda_i (v_i - sum_j lambda_j v_j)
  double vbar = value;  // sum_j lambda_j v_j
  for (int i = 0; i < k; ++i)
    grad.lambda_raw[i] += params.comps[i].lambda * (v[i] - vbar);

  for (int i = 0; i < k; ++i) {
    const VmfComponent& c = params.comps[i];
    double t = dot(nu, c.mu);
    double lv = c.lambda * v[i];

    // kappa' through the exp map; clamped values get zero gradient
    double kappa_unclamped = std::exp(raw.kappa_raw[i]);
    if (kappa_unclamped > kKappaMin && kappa_unclamped < kKappaMax)
      grad.kappa_raw[i] += lv * dlogv_dkappa(t, c.kappa, raw.dim) * c.kappa;

    // mu' through the normalization; dV/dmu = lambda v kappa nu projected
    // onto the tangent at mu, divided by |mu'|
    Vec3 m{raw.mu_raw[i][0], raw.mu_raw[i][1],
           raw.dim == 3 ? raw.mu_raw[i][2] : 0.0};
    double mn = norm(m);
    if (mn >= 1e-12) {
      Vec3 dmu = (lv * c.kappa / mn) * (nu - t * c.mu);
      grad.mu_raw[i][0] += dmu.x;
      grad.mu_raw[i][1] += dmu.y;
      if (raw.dim == 3) grad.mu_raw[i][2] += dmu.z;
    }
  }
  return value;
}

}  // namespace

double mixture_grad(Vec3 nu, const UnnormParams& raw, ParamGrad& grad) {
  MixtureParams params = normalize_params(raw);
  return mixture_grad_one(nu, raw, params, grad);
}

double mixture_grad_reflected(Vec3 nu, Vec3 n, const UnnormParams& raw,
                              ParamGrad& grad) {
  MixtureParams params = normalize_params(raw);
  double v = mixture_grad_one(nu, raw, params, grad);
  v += mixture_grad_one(reflect_off_plane(nu, n), raw, params, grad);
  return v;
}

}  // namespace wost
