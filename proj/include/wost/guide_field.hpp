#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "wost/sphdist.hpp"
#include "wost/vec.hpp"

namespace wost {

struct FieldConfig {
  std::vector<int> level_res = {16, 32, 64, 128};  // lattice points per axis
  int features = 4;
  int hidden = 64;
  int mixture_k = 8;
  int mixture_dim = 2;

  int levels() const { return static_cast<int>(level_res.size()); }
  int input_dim() const { return levels() * features; }
  int output_dim() const {
    return UnnormParams::param_count(mixture_k, mixture_dim);
  }
};

// Dense multi-resolution feature grid feeding a 3-layer ReLU MLP (hidden
// width 64) that emits the unnormalized mixture parameters plus the raw
// selection probability at any point of the scene bbox.
//
// Parameters are stored as 32-bit floats. The sampling path (eval /
// eval_batch) runs in single precision for speed; the training path
// (eval_with_tape + backward + adam_step) runs in double. Samplers stay
// exactly consistent with their pdfs because both come from the same
// decoded output. Inference is const and safe to call concurrently;
// training requires exclusive access.
class GuidingField {
 public:
  GuidingField(const FieldConfig& config, const Bbox& bbox, uint64_t seed);

  const FieldConfig& config() const { return cfg_; }
  const Bbox& bbox() const { return bbox_; }
  size_t param_count() const { return params_.size(); }
  int64_t adam_steps() const { return adam_steps_; }

  void eval(Vec2 x, double* out) const;
  UnnormParams eval_params(Vec2 x) const;
  // row-major [points x output_dim]; elementwise identical to eval
  void eval_batch(std::span<const Vec2> xs, double* out) const;

  struct Tape {
    std::vector<size_t> corner_index;  // levels*4, flat parameter indices
    std::vector<double> corner_weight;
    std::vector<double> input;
    std::vector<double> h1pre, h1, h2pre, h2;
  };

  void eval_with_tape(Vec2 x, double* out, Tape& tape) const;

  // Accumulates parameter gradients for one query into grad (length
  // param_count()); tape must come from eval_with_tape on this field.
  void backward(const Tape& tape, const double* d_out,
                std::vector<double>& grad) const;

  // Standard Adam with bias correction; consumes and zeroes grad.
  void adam_step(std::vector<double>& grad, double lr, double beta1,
                 double beta2, double eps);

  void save(std::ostream& out) const;
  static GuidingField load(std::istream& in);

  bool bit_equal(const GuidingField& other) const;

  // raw access for tests and checkpoint tooling
  std::span<const float> params() const { return params_; }
  float get_param(size_t i) const { return params_[i]; }
  void set_param(size_t i, float v) { params_[i] = v; }
  size_t level_offset(int level) const { return level_offset_[level]; }

 private:
  GuidingField() = default;
  void setup_offsets();
  void gather_input(Vec2 x, double* input, size_t* corner_index,
                    double* corner_weight) const;

  FieldConfig cfg_;
  Bbox bbox_;
  std::vector<float> params_;
  std::vector<double> adam_m_, adam_v_;
  int64_t adam_steps_ = 0;

  // offsets into params_
  std::vector<size_t> level_offset_;
  size_t w1_ = 0, b1_ = 0, w2_ = 0, b2_ = 0, w3_ = 0, b3_ = 0;
};

UnnormParams unpack_params(const double* raw, int k, int dim);

}  // namespace wost
