#include "mvai/conv3d.hpp"

#include <algorithm>
#include <cstring>
#include <stdexcept>
#include <string>

namespace mvai {

namespace {

// SIMD lane group; GCC/Clang vector extensions lower this to the widest
// available registers (or pairs of narrower ones).
template <class S>
struct VecOf;
template <>
struct VecOf<float> {
  typedef float type __attribute__((vector_size(64)));
};
template <>
struct VecOf<double> {
  typedef double type __attribute__((vector_size(64)));
};
template <class S>
using Vec = typename VecOf<S>::type;

template <class S>
constexpr int kLanes = static_cast<int>(64 / sizeof(S));

constexpr int kGroup = 8;  // output channels accumulated together

template <class S>
inline Vec<S> load(const S* p) {
  Vec<S> v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

template <class S>
inline void store(S* p, const Vec<S>& v) {
  std::memcpy(p, &v, sizeof v);
}

template <class S>
inline double hsum(const Vec<S>& v) {
  double s = 0.0;
  for (int l = 0; l < kLanes<S>; ++l) s += v[l];
  return s;
}

int round_up(int n, int m) { return (n + m - 1) / m * m; }

bool unit_stride(const ConvGeometry& g) {
  return g.stride[0] == 1 && g.stride[1] == 1 && g.stride[2] == 1;
}

// `in` copied into a zero volume padded by p[0], p[2] on the time and
// coordinate axes; vertex runs start at offset p[1] and have length `len`.
template <class S>
struct Padded {
  std::vector<S> data;
  int t = 0, x = 0, len = 0;  // padded extents
  std::size_t line(int ci, int t_, int x_) const {
    return ((static_cast<std::size_t>(ci) * t + t_) * x + x_) * len;
  }
};

template <class S>
Padded<S> pad_volume(const Volume<S>& in, const Dims3& p, int len) {
  Padded<S> out;
  out.t = in.dims[0] + 2 * p[0];
  out.x = in.dims[2] + 2 * p[2];
  out.len = len;
  out.data.assign(static_cast<std::size_t>(in.channels) * out.t * out.x * len, S(0));
  const S* src = in.data.data();
  for (int ci = 0; ci < in.channels; ++ci)
    for (int t = 0; t < in.dims[0]; ++t)
      for (int x = 0; x < in.dims[2]; ++x, src += in.dims[1])
        std::copy_n(src, in.dims[1], out.data.data() + out.line(ci, t + p[0], x + p[2]) + p[1]);
  return out;
}

// B consecutive lane groups of G output channels starting at v0. Taps are
// visited in (ci, kt, kc, kv) order whatever the blocking, so each output
// element sees the same summation sequence.
template <class S, int G, int B>
inline void forward_tile(const S* src, const Padded<S>& in, int cin, const S* wtap, const S* bias,
                         const ConvGeometry& g, S* dst, std::size_t dst_stride) {
  constexpr int L = kLanes<S>;
  Vec<S> acc[G][B];
  for (int c = 0; c < G; ++c)
    for (int b = 0; b < B; ++b) acc[c][b] = Vec<S>{} + bias[c];
  const S* w = wtap;
  for (int ci = 0; ci < cin; ++ci)
    for (int kt = 0; kt < g.kernel[0]; ++kt)
      for (int kc = 0; kc < g.kernel[2]; ++kc) {
        const S* row = src + in.line(ci, kt, kc);
        for (int kv = 0; kv < g.kernel[1]; ++kv, w += G) {
          for (int b = 0; b < B; ++b) {
            const Vec<S> x = load<S>(row + kv + b * L);
            for (int c = 0; c < G; ++c) acc[c][b] += w[c] * x;
          }
        }
      }
  for (int c = 0; c < G; ++c)
    for (int b = 0; b < B; ++b) store<S>(dst + c * dst_stride + b * L, acc[c][b]);
}

template <class S, int G>
void forward_group(const Padded<S>& in, int cin, const S* wtap, const S* bias, const ConvGeometry& g,
                   const Dims3& od, int out_len, S* out_pad) {
  constexpr int L = kLanes<S>;
  constexpr int B = G >= 8 ? 1 : G >= 4 ? 2 : 8;
  const std::size_t stride = static_cast<std::size_t>(od[0]) * od[2] * out_len;
  for (int to = 0; to < od[0]; ++to)
    for (int xo = 0; xo < od[2]; ++xo) {
      const S* src = in.data.data() + in.line(0, to, xo);
      S* dst = out_pad + (static_cast<std::size_t>(to) * od[2] + xo) * out_len;
      int v0 = 0;
      for (; v0 + B * L <= out_len; v0 += B * L)
        forward_tile<S, G, B>(src + v0, in, cin, wtap, bias, g, dst + v0, stride);
      for (; v0 < out_len; v0 += L) forward_tile<S, G, 1>(src + v0, in, cin, wtap, bias, g, dst + v0, stride);
    }
}

// Weights for output channels [co0, co0+G) regrouped as [ci][kt][kc][kv][c].
template <class S>
std::vector<S> gather_taps(std::span<const S> weight, const ConvGeometry& g, int cin, int co0, int G) {
  std::vector<S> wtap(static_cast<std::size_t>(cin) * g.kernel[0] * g.kernel[1] * g.kernel[2] * G);
  std::size_t i = 0;
  for (int ci = 0; ci < cin; ++ci)
    for (int kt = 0; kt < g.kernel[0]; ++kt)
      for (int kc = 0; kc < g.kernel[2]; ++kc)
        for (int kv = 0; kv < g.kernel[1]; ++kv)
          for (int c = 0; c < G; ++c) wtap[i++] = weight[kernel_index(g, cin, co0 + c, ci, kt, kv, kc)];
  return wtap;
}

template <class S, class F>
void dispatch_group(int G, F&& f) {
  switch (G) {
    case 1: f.template operator()<1>(); break;
    case 2: f.template operator()<2>(); break;
    case 3: f.template operator()<3>(); break;
    case 4: f.template operator()<4>(); break;
    case 5: f.template operator()<5>(); break;
    case 6: f.template operator()<6>(); break;
    case 7: f.template operator()<7>(); break;
    default: f.template operator()<8>(); break;
  }
}

template <class S>
void forward_unit_stride(const Volume<S>& in, std::span<const S> weight, std::span<const S> bias,
                         const ConvGeometry& g, Volume<S>& out) {
  const Dims3& od = out.dims;
  const int out_len = round_up(od[1], kLanes<S>);
  const Padded<S> in_pad = pad_volume(in, g.padding, out_len + g.kernel[1] - 1);
  const std::size_t out_lines = static_cast<std::size_t>(od[0]) * od[2];
  std::vector<S> out_pad(out_lines * kGroup * out_len);
  for (int co0 = 0; co0 < out.channels; co0 += kGroup) {
    const int G = std::min(kGroup, out.channels - co0);
    const std::vector<S> wtap = gather_taps(weight, g, in.channels, co0, G);
    dispatch_group<S>(G, [&]<int N>() {
      forward_group<S, N>(in_pad, in.channels, wtap.data(), bias.data() + co0, g, od, out_len, out_pad.data());
    });
    for (int c = 0; c < G; ++c)
      for (std::size_t l = 0; l < out_lines; ++l)
        std::copy_n(out_pad.data() + (c * out_lines + l) * out_len, od[1],
                    out.data.data() + ((co0 + c) * out_lines + l) * od[1]);
  }
}

struct Tap {
  int ci, kt, kv, kc;
  std::size_t offset;  // of the tap's first input element in the padded volume
};

// dW for output channels [co0, co0+G) and P taps at once over output lines
// [l0, l1): every vector step loads G grad_out vectors and P shifted input
// vectors. Accumulators live in `acc` between calls.
template <class S, int G, int P>
void weight_grad_tile(const S* go_pad, int out_len, const Dims3& od, int co0, const Padded<S>& in,
                      const Tap* taps, int l0, int l1, Vec<S>* acc_mem) {
  constexpr int L = kLanes<S>;
  Vec<S> acc[G][P];
  for (int c = 0; c < G; ++c)
    for (int p = 0; p < P; ++p) acc[c][p] = acc_mem[c * P + p];
  const std::size_t plane = static_cast<std::size_t>(od[0]) * od[2] * out_len;
  for (int l = l0; l < l1; ++l) {
    const int to = l / od[2], xo = l % od[2];
    const S* go = go_pad + co0 * plane + static_cast<std::size_t>(l) * out_len;
    const S* src[P];
    for (int p = 0; p < P; ++p) src[p] = in.data.data() + taps[p].offset + in.line(0, to, xo);
    for (int v0 = 0; v0 < out_len; v0 += L) {
      Vec<S> gv[G];
      for (int c = 0; c < G; ++c) gv[c] = load<S>(go + c * plane + v0);
      for (int p = 0; p < P; ++p) {
        const Vec<S> x = load<S>(src[p] + v0);
        for (int c = 0; c < G; ++c) acc[c][p] += gv[c] * x;
      }
    }
  }
  for (int c = 0; c < G; ++c)
    for (int p = 0; p < P; ++p) acc_mem[c * P + p] = acc[c][p];
}

// Lines are visited in small chunks so the grad_out rows of a chunk stay in
// L1 while every tap group passes over them.
template <class S, int G>
void weight_grad_group(const S* go_pad, int out_len, const Dims3& od, int co0, const Padded<S>& in,
                       const std::vector<Tap>& taps, const ConvGeometry& g, int cin, std::vector<double>& gw) {
  constexpr int P = G >= 8 ? 2 : G >= 4 ? 4 : 8;
  const int lines = od[0] * od[2];
  const int chunk = std::max(1, 8192 / (G * out_len));
  const std::size_t full = taps.size() / P * P;
  std::vector<Vec<S>> acc(taps.size() * G, Vec<S>{});
  for (int l0 = 0; l0 < lines; l0 += chunk) {
    const int l1 = std::min(lines, l0 + chunk);
    std::size_t i = 0;
    for (; i < full; i += P)
      weight_grad_tile<S, G, P>(go_pad, out_len, od, co0, in, taps.data() + i, l0, l1, acc.data() + i * G);
    for (; i < taps.size(); ++i)
      weight_grad_tile<S, G, 1>(go_pad, out_len, od, co0, in, taps.data() + i, l0, l1, acc.data() + i * G);
  }
  for (std::size_t i = 0; i < taps.size(); ++i) {
    const int n = i < full ? P : 1;
    const std::size_t first = i < full ? i / P * P : i;
    const int p = static_cast<int>(i - first);
    const Tap& t = taps[i];
    for (int c = 0; c < G; ++c)
      gw[kernel_index(g, cin, co0 + c, t.ci, t.kt, t.kv, t.kc)] += hsum<S>(acc[first * G + c * n + p]);
  }
}

template <class S>
Volume<S> forward_generic(const Volume<S>& in, std::span<const S> weight, std::span<const S> bias,
                          int out_channels, const ConvGeometry& g, const Dims3& od) {
  Volume<S> out(out_channels, od);
  for (int co = 0; co < out_channels; ++co)
    for (int to = 0; to < od[0]; ++to)
      for (int vo = 0; vo < od[1]; ++vo)
        for (int xo = 0; xo < od[2]; ++xo) {
          S acc = bias[co];
          for (int ci = 0; ci < in.channels; ++ci)
            for (int kt = 0; kt < g.kernel[0]; ++kt) {
              const int ti = to * g.stride[0] + kt - g.padding[0];
              if (ti < 0 || ti >= in.dims[0]) continue;
              for (int kv = 0; kv < g.kernel[1]; ++kv) {
                const int vi = vo * g.stride[1] + kv - g.padding[1];
                if (vi < 0 || vi >= in.dims[1]) continue;
                for (int kc = 0; kc < g.kernel[2]; ++kc) {
                  const int xi = xo * g.stride[2] + kc - g.padding[2];
                  if (xi < 0 || xi >= in.dims[2]) continue;
                  acc += weight[kernel_index(g, in.channels, co, ci, kt, kv, kc)] * in.at(ci, ti, vi, xi);
                }
              }
            }
          out.at(co, to, vo, xo) = acc;
        }
  return out;
}

void check_weights(int cin, int cout, const ConvGeometry& g, std::size_t wsize, std::size_t bsize) {
  const std::size_t expected = static_cast<std::size_t>(cout) * cin * g.kernel[0] * g.kernel[1] * g.kernel[2];
  if (wsize != expected) {
    throw std::invalid_argument("conv3d weight has " + std::to_string(wsize) + " entries, expected " +
                                std::to_string(expected));
  }
  if (bsize != static_cast<std::size_t>(cout)) throw std::invalid_argument("conv3d bias size mismatch");
}

}  // namespace

Dims3 conv_output_dims(const Dims3& in, const ConvGeometry& g) {
  Dims3 out{};
  for (int a = 0; a < 3; ++a) {
    if (g.kernel[a] < 1 || g.stride[a] < 1 || g.padding[a] < 0) {
      throw std::invalid_argument("conv3d kernel/stride must be >= 1 and padding >= 0");
    }
    const int padded = in[a] + 2 * g.padding[a];
    if (g.kernel[a] > padded) {
      throw std::invalid_argument("conv3d kernel extent " + std::to_string(g.kernel[a]) + " exceeds padded input " +
                                  std::to_string(padded) + " on axis " + std::to_string(a));
    }
    out[a] = (padded - g.kernel[a]) / g.stride[a] + 1;
  }
  return out;
}

template <class S>
Volume<S>::Volume(int channels_, const Dims3& dims_)
    : channels(channels_),
      dims(dims_),
      data(static_cast<std::size_t>(channels_) * dims_[0] * dims_[1] * dims_[2], S(0)) {}

template <class S>
Volume<S> conv3d_forward(const Volume<S>& in, std::span<const S> weight, std::span<const S> bias,
                         int out_channels, const ConvGeometry& g) {
  check_weights(in.channels, out_channels, g, weight.size(), bias.size());
  const Dims3 od = conv_output_dims(in.dims, g);
  if (!unit_stride(g)) return forward_generic(in, weight, bias, out_channels, g, od);
  Volume<S> out(out_channels, od);
  forward_unit_stride(in, weight, bias, g, out);
  return out;
}

template <class S>
void conv3d_backward(const Volume<S>& in, std::span<const S> weight, const Volume<S>& grad_out,
                     const ConvGeometry& g, Volume<S>* grad_in, std::span<S> grad_weight,
                     std::span<S> grad_bias) {
  const int cin = in.channels, cout = grad_out.channels;
  check_weights(cin, cout, g, weight.size(), grad_bias.size());
  if (grad_weight.size() != weight.size()) throw std::invalid_argument("grad_weight size mismatch");
  const Dims3 od = conv_output_dims(in.dims, g);
  if (od != grad_out.dims) throw std::invalid_argument("grad_out dims do not match conv output");
  if (grad_in && (grad_in->channels != cin || grad_in->dims != in.dims)) *grad_in = Volume<S>(cin, in.dims);

  const std::size_t per_channel = static_cast<std::size_t>(od[0]) * od[1] * od[2];
  for (int co = 0; co < cout; ++co) {
    double sum = 0.0;
    const S* go = grad_out.data.data() + static_cast<std::size_t>(co) * per_channel;
    for (std::size_t i = 0; i < per_channel; ++i) sum += go[i];
    grad_bias[co] += static_cast<S>(sum);
  }

  if (!unit_stride(g)) {
    for (int co = 0; co < cout; ++co)
      for (int to = 0; to < od[0]; ++to)
        for (int vo = 0; vo < od[1]; ++vo)
          for (int xo = 0; xo < od[2]; ++xo) {
            const S go = grad_out.at(co, to, vo, xo);
            for (int ci = 0; ci < cin; ++ci)
              for (int kt = 0; kt < g.kernel[0]; ++kt) {
                const int ti = to * g.stride[0] + kt - g.padding[0];
                if (ti < 0 || ti >= in.dims[0]) continue;
                for (int kv = 0; kv < g.kernel[1]; ++kv) {
                  const int vi = vo * g.stride[1] + kv - g.padding[1];
                  if (vi < 0 || vi >= in.dims[1]) continue;
                  for (int kc = 0; kc < g.kernel[2]; ++kc) {
                    const int xi = xo * g.stride[2] + kc - g.padding[2];
                    if (xi < 0 || xi >= in.dims[2]) continue;
                    const std::size_t wi = kernel_index(g, cin, co, ci, kt, kv, kc);
                    grad_weight[wi] += go * in.at(ci, ti, vi, xi);
                    if (grad_in) grad_in->at(ci, ti, vi, xi) += go * weight[wi];
                  }
                }
              }
          }
    return;
  }

  // Weight gradient: zero-padded grad_out runs against shifted input runs.
  const int out_len = round_up(od[1], kLanes<S>);
  const Padded<S> in_pad = pad_volume(in, g.padding, out_len + g.kernel[1] - 1);
  std::vector<S> go_pad(static_cast<std::size_t>(cout) * od[0] * od[2] * out_len, S(0));
  for (std::size_t l = 0; l < static_cast<std::size_t>(cout) * od[0] * od[2]; ++l)
    std::copy_n(grad_out.data.data() + l * od[1], od[1], go_pad.data() + l * out_len);
  std::vector<Tap> taps;
  for (int ci = 0; ci < cin; ++ci)
    for (int kt = 0; kt < g.kernel[0]; ++kt)
      for (int kc = 0; kc < g.kernel[2]; ++kc)
        for (int kv = 0; kv < g.kernel[1]; ++kv) taps.push_back({ci, kt, kv, kc, in_pad.line(ci, kt, kc) + kv});
  std::vector<double> gw(weight.size(), 0.0);
  for (int co0 = 0; co0 < cout; co0 += kGroup) {
    const int G = std::min(kGroup, cout - co0);
    dispatch_group<S>(G, [&]<int N>() {
      weight_grad_group<S, N>(go_pad.data(), out_len, od, co0, in_pad, taps, g, cin, gw);
    });
  }
  for (std::size_t i = 0; i < gw.size(); ++i) grad_weight[i] += static_cast<S>(gw[i]);

  if (!grad_in) return;
  // The input gradient of a unit-stride correlation is a correlation of
  // grad_out with the flipped, channel-transposed kernel and padding k-1-p.
  ConvGeometry tg;
  for (int a = 0; a < 3; ++a) {
    tg.kernel[a] = g.kernel[a];
    tg.stride[a] = 1;
    tg.padding[a] = g.kernel[a] - 1 - g.padding[a];
    if (tg.padding[a] < 0) throw std::invalid_argument("conv3d padding larger than kernel - 1 is unsupported");
  }
  std::vector<S> flipped(weight.size());
  for (int co = 0; co < cout; ++co)
    for (int ci = 0; ci < cin; ++ci)
      for (int kt = 0; kt < g.kernel[0]; ++kt)
        for (int kv = 0; kv < g.kernel[1]; ++kv)
          for (int kc = 0; kc < g.kernel[2]; ++kc)
            flipped[kernel_index(tg, cout, ci, co, g.kernel[0] - 1 - kt, g.kernel[1] - 1 - kv,
                                 g.kernel[2] - 1 - kc)] = weight[kernel_index(g, cin, co, ci, kt, kv, kc)];
  const std::vector<S> zero_bias(cin, S(0));
  Volume<S> gi(cin, in.dims);
  forward_unit_stride<S>(grad_out, flipped, zero_bias, tg, gi);
  for (std::size_t i = 0; i < gi.data.size(); ++i) grad_in->data[i] += gi.data[i];
}

template struct Volume<float>;
template struct Volume<double>;
template Volume<float> conv3d_forward(const Volume<float>&, std::span<const float>, std::span<const float>, int,
                                      const ConvGeometry&);
template Volume<double> conv3d_forward(const Volume<double>&, std::span<const double>, std::span<const double>,
                                       int, const ConvGeometry&);
template void conv3d_backward(const Volume<float>&, std::span<const float>, const Volume<float>&,
                              const ConvGeometry&, Volume<float>*, std::span<float>, std::span<float>);
template void conv3d_backward(const Volume<double>&, std::span<const double>, const Volume<double>&,
                              const ConvGeometry&, Volume<double>*, std::span<double>, std::span<double>);

}  // namespace mvai
