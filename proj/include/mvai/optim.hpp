#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace mvai {

struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  static Tensor zeros(std::vector<int> shape);
  std::size_t size() const { return data.size(); }
  bool operator==(const Tensor&) const = default;
};

// Named parameters with gradient and Adam moment buffers. Insertion order is
// preserved and defines the checkpoint layout.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor m;
    Tensor v;
    bool grad_ready = false;
  };

  void add(std::string name, Tensor value);

  bool contains(std::string_view name) const;
  const Tensor& value(std::string_view name) const;
  Tensor& value(std::string_view name);
  // Returns the gradient buffer and marks it populated.
  Tensor& grad(std::string_view name);
  const Tensor& grad(std::string_view name) const;

  // Zeroes every gradient and marks all of them populated.
  void zero_grad();

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t num_scalars() const;

  std::int64_t step() const { return step_; }
  void set_step(std::int64_t s) { step_ = s; }

  // Parameter values only (names, shapes, data); moments and grads ignored.
  bool same_values(const ParamStore& other) const;

 private:
  Entry& find(std::string_view name);
  const Entry& find(std::string_view name) const;

  std::vector<Entry> entries_;
  std::int64_t step_ = 0;
};

struct AdamConfig {
  double lr = 3e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;   // L2 term added to the gradient; off by default
  double clip_grad_norm = 0.0; // global-norm clipping; 0 disables

  void validate() const;
};

// One bias-corrected Adam update over every parameter, then gradients are
// zeroed (and marked unpopulated) and the step counter advances. Throws
// std::invalid_argument naming the first parameter without a gradient.
void adam_step(ParamStore& store, const AdamConfig& cfg);

struct GradCheckResult {
  double max_relative_error = 0.0;
  int probes = 0;
  int skipped = 0;  // probes redrawn because +h and -h fell on different branches
  std::string warning;
};

// Compares the gradients stored in `store` against central differences of
// `loss` (step h) at `probes` randomly chosen scalars. Relative error is
// |a - n| / max(1, |a|, |n|).
// Piecewise-smooth losses can pass a `branch` signature (e.g. a hash of
// activation signs). A probe whose +h and -h evaluations disagree on it
// straddles a kink, where a central difference is meaningless; it is
// redrawn, up to 10 * probes draws in total.
GradCheckResult grad_check(const std::function<double(const ParamStore&)>& loss,
                           const ParamStore& store, int probes, std::uint64_t seed,
                           double h = 1e-4,
                           const std::function<std::uint64_t(const ParamStore&)>& branch = {});

// "MPRM" checkpoint: magic, version, tensor count, then per tensor the name
// length and bytes, rank, dims (u32) and float32 data.
void save_params(const std::filesystem::path& path, const ParamStore& store);
ParamStore load_params(const std::filesystem::path& path);

// Parameter values rounded to float32, as they would be after a save/load.
ParamStore round_to_checkpoint_precision(const ParamStore& store);

}  // namespace mvai
