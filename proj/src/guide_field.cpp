#include "wost/guide_field.hpp"

#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "wost/rng.hpp"

namespace wost {

GuidingField::GuidingField(const FieldConfig& config, const Bbox& bbox,
                           uint64_t seed)
    : cfg_(config), bbox_(bbox) {
  if (cfg_.levels() < 1 || cfg_.features < 1 || cfg_.mixture_k < 1)
    throw std::invalid_argument("guiding field: L, F and K must be >= 1");
  if (cfg_.mixture_k > kMaxMixtureComponents)
    throw std::invalid_argument("guiding field: K exceeds the component cap");
  if (cfg_.mixture_dim != 2 && cfg_.mixture_dim != 3)
    throw std::invalid_argument("guiding field: mixture dim must be 2 or 3");
  if (cfg_.hidden < 1)
    throw std::invalid_argument("guiding field: hidden width must be >= 1");
  for (int r : cfg_.level_res)
    if (r < 2)
      throw std::invalid_argument(
          "guiding field: grid resolution must be >= 2 per axis");
  if (cfg_.input_dim() > 256 || cfg_.hidden > 256)
    throw std::invalid_argument(
        "guiding field: L*F and hidden width are capped at 256");
  if (!bbox_.valid() || bbox_.extent().x <= 0.0 || bbox_.extent().y <= 0.0)
    throw std::invalid_argument("guiding field: bbox is empty");

  setup_offsets();

  Rng rng(Rng::mix(seed), 0x67e55044'10b1426fULL);
  size_t embed_count = w1_;
  for (size_t i = 0; i < embed_count; ++i)
    params_[i] = static_cast<float>(rng.uniform(-1e-4, 1e-4));

  auto init_layer = [&](size_t w_off, size_t w_count, size_t b_off,
                        size_t b_count, int fan_in) {
    double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (size_t i = 0; i < w_count; ++i)
      params_[w_off + i] = static_cast<float>(rng.uniform(-scale, scale));
    for (size_t i = 0; i < b_count; ++i) params_[b_off + i] = 0.0f;
  };
  int in = cfg_.input_dim(), hid = cfg_.hidden, out = cfg_.output_dim();
  init_layer(w1_, static_cast<size_t>(in) * hid, b1_, hid, in);
  init_layer(w2_, static_cast<size_t>(hid) * hid, b2_, hid, hid);
  init_layer(w3_, static_cast<size_t>(hid) * out, b3_, out, hid);

  adam_m_.assign(params_.size(), 0.0);
  adam_v_.assign(params_.size(), 0.0);
}

void GuidingField::setup_offsets() {
  size_t off = 0;
  level_offset_.clear();
  for (int r : cfg_.level_res) {
    level_offset_.push_back(off);
    off += static_cast<size_t>(r) * r * cfg_.features;
  }
  int in = cfg_.input_dim(), hid = cfg_.hidden, out = cfg_.output_dim();
  w1_ = off;
  off += static_cast<size_t>(in) * hid;
  b1_ = off;
  off += hid;
  w2_ = off;
  off += static_cast<size_t>(hid) * hid;
  b2_ = off;
  off += hid;
  w3_ = off;
  off += static_cast<size_t>(hid) * out;
  b3_ = off;
  off += out;
  params_.assign(off, 0.0f);
}

void GuidingField::gather_input(Vec2 x, double* input, size_t* corner_index,
                                double* corner_weight) const {
  Vec2 ext = bbox_.extent();
  double u = std::clamp((x.x - bbox_.min.x) / ext.x, 0.0, 1.0);
  double v = std::clamp((x.y - bbox_.min.y) / ext.y, 0.0, 1.0);

  const int f = cfg_.features;
  for (int l = 0; l < cfg_.levels(); ++l) {
    int res = cfg_.level_res[l];
    double px = u * (res - 1);
    double py = v * (res - 1);
    int ix = std::min(static_cast<int>(px), res - 2);
    int iy = std::min(static_cast<int>(py), res - 2);
    double fx = px - ix;
    double fy = py - iy;

    size_t base = level_offset_[l];
    size_t c00 = base + (static_cast<size_t>(iy) * res + ix) * f;
    size_t c10 = c00 + f;
    size_t c01 = c00 + static_cast<size_t>(res) * f;
    size_t c11 = c01 + f;
    double w00 = (1.0 - fx) * (1.0 - fy);
    double w10 = fx * (1.0 - fy);
    double w01 = (1.0 - fx) * fy;
    double w11 = fx * fy;

    if (corner_index) {
      corner_index[4 * l + 0] = c00;
      corner_index[4 * l + 1] = c10;
      corner_index[4 * l + 2] = c01;
      corner_index[4 * l + 3] = c11;
      corner_weight[4 * l + 0] = w00;
      corner_weight[4 * l + 1] = w10;
      corner_weight[4 * l + 2] = w01;
      corner_weight[4 * l + 3] = w11;
    }

    double* dst = input + static_cast<size_t>(l) * f;
    for (int i = 0; i < f; ++i) {
      dst[i] = w00 * params_[c00 + i] + w10 * params_[c10 + i] +
               w01 * params_[c01 + i] + w11 * params_[c11 + i];
    }
  }
}

namespace {

// y[j] = b[j] + sum_i x[i] * w[i*cols + j]; accumulation order is fixed so
// batched and single-point evaluation agree bit for bit
void affine_forward(const double* __restrict x, int rows,
                    const float* __restrict w, const float* __restrict b,
                    int cols, double* __restrict y) {
  for (int j = 0; j < cols; ++j) y[j] = b[j];
  int i = 0;
  for (; i + 2 <= rows; i += 2) {
    double x0 = x[i], x1 = x[i + 1];
    const float* w0 = w + static_cast<size_t>(i) * cols;
    const float* w1 = w0 + cols;
    for (int j = 0; j < cols; ++j) y[j] += x0 * w0[j] + x1 * w1[j];
  }
  for (; i < rows; ++i) {
    double xi = x[i];
    const float* wr = w + static_cast<size_t>(i) * cols;
    for (int j = 0; j < cols; ++j) y[j] += xi * wr[j];
  }
}

// single-precision variant used on the sampling path, where throughput
// matters and the decoded mixture only has to be self-consistent
void affine_forward_f(const float* __restrict x, int rows,
                      const float* __restrict w, const float* __restrict b,
                      int cols, float* __restrict y, bool relu_out) {
  for (int j = 0; j < cols; ++j) y[j] = b[j];
  int i = 0;
  for (; i + 4 <= rows; i += 4) {
    float x0 = x[i], x1 = x[i + 1], x2 = x[i + 2], x3 = x[i + 3];
    const float* w0 = w + static_cast<size_t>(i) * cols;
    const float* w1 = w0 + cols;
    const float* w2 = w1 + cols;
    const float* w3 = w2 + cols;
    for (int j = 0; j < cols; ++j)
      y[j] += (x0 * w0[j] + x1 * w1[j]) + (x2 * w2[j] + x3 * w3[j]);
  }
  for (; i < rows; ++i) {
    float xi = x[i];
    const float* wr = w + static_cast<size_t>(i) * cols;
    for (int j = 0; j < cols; ++j) y[j] += xi * wr[j];
  }
  if (relu_out)
    for (int j = 0; j < cols; ++j) y[j] = y[j] > 0.0f ? y[j] : 0.0f;
}

void relu(const double* pre, int n, double* post) {
  for (int i = 0; i < n; ++i) post[i] = pre[i] > 0.0 ? pre[i] : 0.0;
}

}  // namespace

void GuidingField::eval(Vec2 x, double* out) const {
  const int in = cfg_.input_dim(), hid = cfg_.hidden, od = cfg_.output_dim();
  float input[256];
  float h1[256], h2[256], outf[256];

  // single-precision gather
  {
    Vec2 ext = bbox_.extent();
    float u = static_cast<float>(
        std::clamp((x.x - bbox_.min.x) / ext.x, 0.0, 1.0));
    float v = static_cast<float>(
        std::clamp((x.y - bbox_.min.y) / ext.y, 0.0, 1.0));
    const int f = cfg_.features;
    for (int l = 0; l < cfg_.levels(); ++l) {
      int res = cfg_.level_res[l];
      float px = u * (res - 1);
      float py = v * (res - 1);
      int ix = std::min(static_cast<int>(px), res - 2);
      int iy = std::min(static_cast<int>(py), res - 2);
      float fx = px - ix;
      float fy = py - iy;
      const float* base =
          params_.data() + level_offset_[l] +
          (static_cast<size_t>(iy) * res + ix) * f;
      const float* up = base + static_cast<size_t>(res) * f;
      float w00 = (1.0f - fx) * (1.0f - fy);
      float w10 = fx * (1.0f - fy);
      float w01 = (1.0f - fx) * fy;
      float w11 = fx * fy;
      float* dst = input + static_cast<size_t>(l) * f;
      for (int i = 0; i < f; ++i)
        dst[i] = (w00 * base[i] + w10 * base[f + i]) +
                 (w01 * up[i] + w11 * up[f + i]);
    }
  }

  affine_forward_f(input, in, params_.data() + w1_, params_.data() + b1_, hid,
                   h1, true);
  affine_forward_f(h1, hid, params_.data() + w2_, params_.data() + b2_, hid,
                   h2, true);
  affine_forward_f(h2, hid, params_.data() + w3_, params_.data() + b3_, od,
                   outf, false);
  for (int j = 0; j < od; ++j) out[j] = outf[j];
}

void GuidingField::eval_with_tape(Vec2 x, double* out, Tape& tape) const {
  const int in = cfg_.input_dim(), hid = cfg_.hidden, od = cfg_.output_dim();
  tape.corner_index.resize(static_cast<size_t>(cfg_.levels()) * 4);
  tape.corner_weight.resize(static_cast<size_t>(cfg_.levels()) * 4);
  tape.input.resize(in);
  tape.h1pre.resize(hid);
  tape.h1.resize(hid);
  tape.h2pre.resize(hid);
  tape.h2.resize(hid);

  gather_input(x, tape.input.data(), tape.corner_index.data(),
               tape.corner_weight.data());
  affine_forward(tape.input.data(), in, params_.data() + w1_,
                 params_.data() + b1_, hid, tape.h1pre.data());
  relu(tape.h1pre.data(), hid, tape.h1.data());
  affine_forward(tape.h1.data(), hid, params_.data() + w2_,
                 params_.data() + b2_, hid, tape.h2pre.data());
  relu(tape.h2pre.data(), hid, tape.h2.data());
  affine_forward(tape.h2.data(), hid, params_.data() + w3_,
                 params_.data() + b3_, od, out);
}

UnnormParams GuidingField::eval_params(Vec2 x) const {
  double out[(2 + 3) * kMaxMixtureComponents + 1];
  eval(x, out);
  return unpack_params(out, cfg_.mixture_k, cfg_.mixture_dim);
}

void GuidingField::eval_batch(std::span<const Vec2> xs, double* out) const {
  const int od = cfg_.output_dim();
#pragma omp parallel for schedule(static)
  for (long i = 0; i < static_cast<long>(xs.size()); ++i)
    eval(xs[i], out + static_cast<size_t>(i) * od);
}

void GuidingField::backward(const Tape& tape, const double* d_out,
                            std::vector<double>& grad) const {
  const int in = cfg_.input_dim(), hid = cfg_.hidden, od = cfg_.output_dim();
  double d_h2[256], d_h1[256], d_in[256];

  // layer 3
  for (int j = 0; j < od; ++j) grad[b3_ + j] += d_out[j];
  for (int i = 0; i < hid; ++i) {
    const float* wr = params_.data() + w3_ + static_cast<size_t>(i) * od;
    double* gw = grad.data() + w3_ + static_cast<size_t>(i) * od;
    double hi = tape.h2[i];
    double acc = 0.0;
    for (int j = 0; j < od; ++j) {
      gw[j] += hi * d_out[j];
      acc += wr[j] * d_out[j];
    }
    d_h2[i] = tape.h2pre[i] > 0.0 ? acc : 0.0;
  }

  // layer 2
  for (int j = 0; j < hid; ++j) grad[b2_ + j] += d_h2[j];
  for (int i = 0; i < hid; ++i) {
    const float* wr = params_.data() + w2_ + static_cast<size_t>(i) * hid;
    double* gw = grad.data() + w2_ + static_cast<size_t>(i) * hid;
    double hi = tape.h1[i];
    double acc = 0.0;
    for (int j = 0; j < hid; ++j) {
      gw[j] += hi * d_h2[j];
      acc += wr[j] * d_h2[j];
    }
    d_h1[i] = tape.h1pre[i] > 0.0 ? acc : 0.0;
  }

  // layer 1
  for (int j = 0; j < hid; ++j) grad[b1_ + j] += d_h1[j];
  for (int i = 0; i < in; ++i) {
    const float* wr = params_.data() + w1_ + static_cast<size_t>(i) * hid;
    double* gw = grad.data() + w1_ + static_cast<size_t>(i) * hid;
    double xi = tape.input[i];
    double acc = 0.0;
    for (int j = 0; j < hid; ++j) {
      gw[j] += xi * d_h1[j];
      acc += wr[j] * d_h1[j];
    }
    d_in[i] = acc;
  }

  // grid: route each feature gradient to the 4 enclosing corners per level
  const int f = cfg_.features;
  for (int l = 0; l < cfg_.levels(); ++l) {
    const double* din = d_in + static_cast<size_t>(l) * f;
    for (int cidx = 0; cidx < 4; ++cidx) {
      size_t base = tape.corner_index[4 * l + cidx];
      double w = tape.corner_weight[4 * l + cidx];
      for (int i = 0; i < f; ++i) grad[base + i] += w * din[i];
    }
  }
}

void GuidingField::adam_step(std::vector<double>& grad, double lr,
                             double beta1, double beta2, double eps) {
  ++adam_steps_;
  double bc1 = 1.0 - std::pow(beta1, static_cast<double>(adam_steps_));
  double bc2 = 1.0 - std::pow(beta2, static_cast<double>(adam_steps_));
  const size_t n = params_.size();
  for (size_t i = 0; i < n; ++i) {
    double g = grad[i];
    double m = adam_m_[i] = beta1 * adam_m_[i] + (1.0 - beta1) * g;
    double v = adam_v_[i] = beta2 * adam_v_[i] + (1.0 - beta2) * g * g;
    double update = lr * (m / bc1) / (std::sqrt(v / bc2) + eps);
    params_[i] = static_cast<float>(static_cast<double>(params_[i]) - update);
    grad[i] = 0.0;
  }
}

namespace {

constexpr char kMagic[4] = {'W', 'G', 'F', '1'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

}  // namespace

void GuidingField::save(std::ostream& out) const {
  out.write(kMagic, 4);
  put<uint32_t>(out, 1);  // version
  put<uint32_t>(out, static_cast<uint32_t>(cfg_.levels()));
  for (int r : cfg_.level_res) put<uint32_t>(out, static_cast<uint32_t>(r));
  put<uint32_t>(out, static_cast<uint32_t>(cfg_.features));
  put<uint32_t>(out, static_cast<uint32_t>(cfg_.hidden));
  put<uint32_t>(out, static_cast<uint32_t>(cfg_.mixture_k));
  put<uint32_t>(out, static_cast<uint32_t>(cfg_.mixture_dim));
  put<double>(out, bbox_.min.x);
  put<double>(out, bbox_.min.y);
  put<double>(out, bbox_.max.x);
  put<double>(out, bbox_.max.y);
  put<int64_t>(out, adam_steps_);
  put<uint64_t>(out, params_.size());
  out.write(reinterpret_cast<const char*>(params_.data()),
            static_cast<std::streamsize>(params_.size() * sizeof(float)));
  out.write(reinterpret_cast<const char*>(adam_m_.data()),
            static_cast<std::streamsize>(adam_m_.size() * sizeof(double)));
  out.write(reinterpret_cast<const char*>(adam_v_.data()),
            static_cast<std::streamsize>(adam_v_.size() * sizeof(double)));
}

GuidingField GuidingField::load(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("guiding field checkpoint: bad magic");
  if (get<uint32_t>(in) != 1)
    throw std::runtime_error("guiding field checkpoint: unknown version");

  GuidingField field;
  uint32_t levels = get<uint32_t>(in);
  field.cfg_.level_res.resize(levels);
  for (uint32_t l = 0; l < levels; ++l)
    field.cfg_.level_res[l] = static_cast<int>(get<uint32_t>(in));
  field.cfg_.features = static_cast<int>(get<uint32_t>(in));
  field.cfg_.hidden = static_cast<int>(get<uint32_t>(in));
  field.cfg_.mixture_k = static_cast<int>(get<uint32_t>(in));
  field.cfg_.mixture_dim = static_cast<int>(get<uint32_t>(in));
  field.bbox_.min.x = get<double>(in);
  field.bbox_.min.y = get<double>(in);
  field.bbox_.max.x = get<double>(in);
  field.bbox_.max.y = get<double>(in);
  field.adam_steps_ = get<int64_t>(in);

  field.setup_offsets();
  uint64_t count = get<uint64_t>(in);
  if (count != field.params_.size())
    throw std::runtime_error("guiding field checkpoint: size mismatch");
  in.read(reinterpret_cast<char*>(field.params_.data()),
          static_cast<std::streamsize>(count * sizeof(float)));
  field.adam_m_.resize(count);
  field.adam_v_.resize(count);
  in.read(reinterpret_cast<char*>(field.adam_m_.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  in.read(reinterpret_cast<char*>(field.adam_v_.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!in) throw std::runtime_error("guiding field checkpoint: truncated");
  return field;
}

bool GuidingField::bit_equal(const GuidingField& other) const {
  return params_.size() == other.params_.size() &&
         std::memcmp(params_.data(), other.params_.data(),
                     params_.size() * sizeof(float)) == 0 &&
         std::memcmp(adam_m_.data(), other.adam_m_.data(),
                     adam_m_.size() * sizeof(double)) == 0 &&
         std::memcmp(adam_v_.data(), other.adam_v_.data(),
                     adam_v_.size() * sizeof(double)) == 0 &&
         adam_steps_ == other.adam_steps_;
}

UnnormParams unpack_params(const double* raw, int k, int dim) {
  UnnormParams p;
  p.k = k;
  p.dim = dim;
  const double* m = raw;
  for (int i = 0; i < k; ++i) {
    p.mu_raw[i][0] = m[0];
    p.mu_raw[i][1] = m[1];
    p.mu_raw[i][2] = dim == 3 ? m[2] : 0.0;
    m += dim;
  }
  for (int i = 0; i < k; ++i) p.kappa_raw[i] = m[i];
  m += k;
  for (int i = 0; i < k; ++i) p.lambda_raw[i] = m[i];
  m += k;
  p.c_raw = m[0];
  return p;
}

}  // namespace wost
