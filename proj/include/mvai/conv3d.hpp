#pragma once

#include <array>
#include <span>
#include <vector>

namespace mvai {

// Axis order everywhere in this header: (time, vertex, coordinate).
using Dims3 = std::array<int, 3>;

struct ConvGeometry {
  Dims3 kernel{5, 1, 3};
  Dims3 stride{1, 1, 1};
  Dims3 padding{2, 0, 1};
};

// Output extent per axis: (in + 2*pad - kernel) / stride + 1. Throws
// std::invalid_argument when the kernel does not fit the padded input.
Dims3 conv_output_dims(const Dims3& in, const ConvGeometry& g);

// Multi-channel volume over (time, vertex, coordinate). Storage is
// [channel][time][coordinate][vertex] so vertex runs are contiguous.
template <class S>
struct Volume {
  int channels = 0;
  Dims3 dims{0, 0, 0};
  std::vector<S> data;

  Volume() = default;
  Volume(int channels, const Dims3& dims);

  std::size_t line_index(int ch, int t, int c) const {
    return ((static_cast<std::size_t>(ch) * dims[0] + t) * dims[2] + c) * dims[1];
  }
  S& at(int ch, int t, int v, int c) { return data[line_index(ch, t, c) + v]; }
  S at(int ch, int t, int v, int c) const { return data[line_index(ch, t, c) + v]; }
};

// Weights are laid out [out][in][kt][kv][kc].
inline std::size_t kernel_index(const ConvGeometry& g, int cin, int co, int ci, int kt, int kv,
                                int kc) {
  return ((((static_cast<std::size_t>(co) * cin + ci) * g.kernel[0] + kt) * g.kernel[1] + kv) *
              g.kernel[2] +
          kc);
}

// Zero-padded cross-correlation plus per-output-channel bias.
template <class S>
Volume<S> conv3d_forward(const Volume<S>& in, std::span<const S> weight, std::span<const S> bias,
                         int out_channels, const ConvGeometry& g);

// Accumulates into grad_weight / grad_bias; writes grad_in when non-null.
template <class S>
void conv3d_backward(const Volume<S>& in, std::span<const S> weight, const Volume<S>& grad_out,
                     const ConvGeometry& g, Volume<S>* grad_in, std::span<S> grad_weight,
                     std::span<S> grad_bias);

}  // namespace mvai
