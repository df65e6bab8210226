#include "mvai/optim.hpp"

#include <cmath>
#include <iostream>
#include <numeric>
#include <random>
#include <stdexcept>

#include "mvai/binary_io.hpp"

namespace mvai {

namespace {
constexpr std::uint32_t kParamVersion = 1;
}

Tensor Tensor::zeros(std::vector<int> shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw std::invalid_argument("negative tensor dimension");
    n *= static_cast<std::size_t>(d);
  }
  return Tensor{std::move(shape), std::vector<double>(n, 0.0)};
}

void ParamStore::add(std::string name, Tensor value) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter: " + name);
  std::size_t expected = 1;
  for (int d : value.shape) expected *= static_cast<std::size_t>(d);
  if (expected != value.data.size()) throw std::invalid_argument("tensor shape/data mismatch: " + name);
  Entry e;
  e.name = std::move(name);
  e.grad = Tensor::zeros(value.shape);
  e.m = Tensor::zeros(value.shape);
  e.v = Tensor::zeros(value.shape);
  e.value = std::move(value);
  entries_.push_back(std::move(e));
}

bool ParamStore::contains(std::string_view name) const {
  for (const auto& e : entries_)
    if (e.name == name) return true;
  return false;
}

ParamStore::Entry& ParamStore::find(std::string_view name) {
  for (auto& e : entries_)
    if (e.name == name) return e;
  throw std::out_of_range("unknown parameter: " + std::string(name));
}

const ParamStore::Entry& ParamStore::find(std::string_view name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e;
  throw std::out_of_range("unknown parameter: " + std::string(name));
}

const Tensor& ParamStore::value(std::string_view name) const { return find(name).value; }
Tensor& ParamStore::value(std::string_view name) { return find(name).value; }
const Tensor& ParamStore::grad(std::string_view name) const { return find(name).grad; }

Tensor& ParamStore::grad(std::string_view name) {
  Entry& e = find(name);
  e.grad_ready = true;
  return e.grad;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) {
    std::fill(e.grad.data.begin(), e.grad.data.end(), 0.0);
    e.grad_ready = true;
  }
}

std::size_t ParamStore::num_scalars() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

bool ParamStore::same_values(const ParamStore& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name != other.entries_[i].name) return false;
    if (!(entries_[i].value == other.entries_[i].value)) return false;
  }
  return true;
}

void AdamConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw std::invalid_argument("beta1 must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw std::invalid_argument("beta2 must be in [0, 1)");
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be > 0");
  if (weight_decay < 0.0 || clip_grad_norm < 0.0) {
    throw std::invalid_argument("weight decay and clipping must be >= 0");
  }
}

void adam_step(ParamStore& store, const AdamConfig& cfg) {
  cfg.validate();
  for (const auto& e : store.entries()) {
    if (!e.grad_ready) throw std::invalid_argument("missing gradient for parameter " + e.name);
  }
  double scale = 1.0;
  if (cfg.clip_grad_norm > 0.0) {
    double sq = 0.0;
    for (const auto& e : store.entries())
      for (double g : e.grad.data) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm > cfg.clip_grad_norm) scale = cfg.clip_grad_norm / norm;
  }
  const std::int64_t t = store.step() + 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (auto& e : store.entries()) {
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      const double g = scale * e.grad.data[i] + cfg.weight_decay * e.value.data[i];
      e.m.data[i] = cfg.beta1 * e.m.data[i] + (1.0 - cfg.beta1) * g;
      e.v.data[i] = cfg.beta2 * e.v.data[i] + (1.0 - cfg.beta2) * g * g;
      const double mhat = e.m.data[i] / bc1;
      const double vhat = e.v.data[i] / bc2;
      e.value.data[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
    std::fill(e.grad.data.begin(), e.grad.data.end(), 0.0);
    e.grad_ready = false;
  }
  store.set_step(t);
}

GradCheckResult grad_check(const std::function<double(const ParamStore&)>& loss,
                           const ParamStore& store, int probes, std::uint64_t seed, double h,
                           const std::function<std::uint64_t(const ParamStore&)>& branch) {
  GradCheckResult result;
  if (probes <= 0) {
    result.warning = "grad_check called with no probes; nothing was checked";
    std::cerr << "warning: " << result.warning << '\n';
    return result;
  }
  for (const auto& e : store.entries()) {
    if (!e.grad_ready) throw std::invalid_argument("missing gradient for parameter " + e.name);
  }
  const std::size_t total = store.num_scalars();
  if (total == 0) throw std::invalid_argument("grad_check on an empty parameter store");

  ParamStore probe = store;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, total - 1);
  for (int draw = 0; result.probes < probes && draw < 10 * probes; ++draw) {
    std::size_t flat = pick(rng);
    std::size_t entry = 0;
    while (flat >= probe.entries()[entry].value.size()) {
      flat -= probe.entries()[entry].value.size();
      ++entry;
    }
    double& x = probe.entries()[entry].value.data[flat];
    const double x0 = x;
    x = x0 + h;
    const double up = loss(probe);
    const std::uint64_t up_branch = branch ? branch(probe) : 0;
    x = x0 - h;
    const double down = loss(probe);
    const std::uint64_t down_branch = branch ? branch(probe) : 0;
    x = x0;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw std::runtime_error("non-finite loss while probing " + probe.entries()[entry].name);
    }
    if (up_branch != down_branch) {
      ++result.skipped;
      continue;
    }
    const double numeric = (up - down) / (2.0 * h);
    const double analytic = store.entries()[entry].grad.data[flat];
    const double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
    result.max_relative_error = std::max(result.max_relative_error, std::abs(analytic - numeric) / denom);
    ++result.probes;
  }
  if (result.probes < probes) {
    result.warning = "only " + std::to_string(result.probes) + " of " + std::to_string(probes) +
                     " probes landed away from a kink";
  }
  return result;
}

void save_params(const std::filesystem::path& path, const ParamStore& store) {
  ByteWriter w;
  w.magic("MPRM");
  w.u32(kParamVersion);
  w.u32(static_cast<std::uint32_t>(store.entries().size()));
  for (const auto& e : store.entries()) {
    w.u32(static_cast<std::uint32_t>(e.name.size()));
    w.bytes(e.name);
    w.u32(static_cast<std::uint32_t>(e.value.shape.size()));
    for (int d : e.value.shape) w.u32(static_cast<std::uint32_t>(d));
    for (double v : e.value.data) w.f32(static_cast<float>(v));
  }
  w.save(path);
}

ParamStore load_params(const std::filesystem::path& path) {
  ByteReader r = ByteReader::from_file(path);
  r.expect_magic("MPRM");
  const auto at = r.offset();
  const std::uint32_t version = r.u32();
  if (version != kParamVersion) throw FormatError("unsupported MPRM version " + std::to_string(version), at);
  const std::uint32_t count = r.u32();
  ParamStore store;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = r.u32();
    if (len > r.remaining()) throw FormatError("tensor name length exceeds file", r.offset());
    std::string name = r.bytes(len);
    const std::uint32_t rank = r.u32();
    if (rank > 16) throw FormatError("implausible tensor rank " + std::to_string(rank), r.offset());
    std::vector<int> shape(rank);
    std::uint64_t n = 1;
    for (auto& d : shape) {
      d = static_cast<int>(r.u32());
      n *= static_cast<std::uint32_t>(d);
    }
    if (n * 4 > r.remaining()) throw FormatError("tensor " + name + " data truncated", r.offset());
    Tensor t = Tensor::zeros(shape);
    for (auto& v : t.data) v = r.f32();
    if (store.contains(name)) throw FormatError("duplicate tensor " + name, r.offset());
    store.add(std::move(name), std::move(t));
  }
  r.expect_end();
  return store;
}

ParamStore round_to_checkpoint_precision(const ParamStore& store) {
  ParamStore out = store;
  for (auto& e : out.entries())
    for (auto& v : e.value.data) v = static_cast<float>(v);
  return out;
}

}  // namespace mvai
