#include "mvai/cuboid.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "mvai/binary_io.hpp"

namespace mvai {

namespace {
constexpr std::uint32_t kSequenceVersion = 1;
}

template <class Tag>
PointSequence<Tag>::PointSequence(int frames, int points, std::vector<float> data)
    : frames_(frames), points_(points), data_(std::move(data)) {
  if (frames < 1 || points < 1) {
    throw std::invalid_argument(std::string(Tag::kName) + " needs T >= 1 and at least one point");
  }
  if (data_.size() != static_cast<std::size_t>(frames) * points * 3) {
    throw std::invalid_argument(std::string(Tag::kName) + " data size does not match T x P x 3");
  }
  for (float v : data_) {
    if (!std::isfinite(v)) throw std::invalid_argument(std::string(Tag::kName) + " has non-finite entries");
  }
}

template <class Tag>
PointSequence<Tag> PointSequence<Tag>::zeros(int frames, int points) {
  return PointSequence(frames, points,
                       std::vector<float>(static_cast<std::size_t>(std::max(frames, 0)) *
                                          std::max(points, 0) * 3));
}

template <class Tag>
PointSequence<Tag> PointSequence<Tag>::from_frames(std::span<const Points> frames) {
  if (frames.empty()) throw std::invalid_argument(std::string("cannot build a ") + Tag::kName + " from zero frames");
  const auto n = frames.front().rows();
  std::vector<float> data;
  data.reserve(frames.size() * n * 3);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    if (frames[t].rows() != n) {
      throw std::invalid_argument("frame " + std::to_string(t) + " has " +
                                  std::to_string(frames[t].rows()) + " points, expected " +
                                  std::to_string(n));
    }
    for (Eigen::Index p = 0; p < n; ++p)
      for (int c = 0; c < 3; ++c) data.push_back(static_cast<float>(frames[t](p, c)));
  }
  return PointSequence(static_cast<int>(frames.size()), static_cast<int>(n), std::move(data));
}

template <class Tag>
Points PointSequence<Tag>::frame(int t) const {
  if (t < 0 || t >= frames_) throw std::out_of_range("frame index out of range");
  Points p(points_, 3);
  for (int i = 0; i < points_; ++i)
    for (int c = 0; c < 3; ++c) p(i, c) = at(t, i, c);
  return p;
}

template <class Tag>
void PointSequence<Tag>::set_frame(int t, const Points& points) {
  if (t < 0 || t >= frames_) throw std::out_of_range("frame index out of range");
  if (points.rows() != points_) throw std::invalid_argument("frame point count mismatch");
  if (!points.allFinite()) throw std::invalid_argument("frame has non-finite entries");
  for (int i = 0; i < points_; ++i)
    for (int c = 0; c < 3; ++c) at(t, i, c) = static_cast<float>(points(i, c));
}

template <class Tag>
std::vector<Points> PointSequence<Tag>::unflatten() const {
  std::vector<Points> out;
  out.reserve(frames_);
  for (int t = 0; t < frames_; ++t) out.push_back(frame(t));
  return out;
}

template class PointSequence<CuboidTag>;
template class PointSequence<JointTag>;

MeshCuboid make_cuboid(std::span<const Points> meshes) { return MeshCuboid::from_frames(meshes); }

MeshCuboid make_cuboid(std::span<const Mesh> meshes) {
  std::vector<Points> v;
  v.reserve(meshes.size());
  for (const auto& m : meshes) v.push_back(m.vertices);
  return make_cuboid(v);
}

namespace {

template <class Tag>
void write_sequence(const std::filesystem::path& path, const PointSequence<Tag>& s) {
  ByteWriter w;
  w.magic(Tag::kMagic);
  w.u32(kSequenceVersion);
  w.u32(static_cast<std::uint32_t>(s.frames()));
  w.u32(static_cast<std::uint32_t>(s.points()));
  w.u32(3);
  w.f32s(s.data());
  w.save(path);
}

template <class Tag>
PointSequence<Tag> read_sequence(const std::filesystem::path& path) {
  ByteReader r = ByteReader::from_file(path);
  r.expect_magic(Tag::kMagic);
  auto at = r.offset();
  const std::uint32_t version = r.u32();
  if (version != kSequenceVersion) throw FormatError("unsupported version " + std::to_string(version), at);
  const std::uint32_t t = r.u32();
  const std::uint32_t p = r.u32();
  at = r.offset();
  const std::uint32_t c = r.u32();
  if (c != 3) throw FormatError("coordinate count must be 3, found " + std::to_string(c), at);
  if (t == 0 || p == 0) throw FormatError("empty sequence header", r.offset());
  const std::uint64_t payload = 12ull * t * p;
  if (r.remaining() != payload) {
    throw FormatError("payload is " + std::to_string(r.remaining()) + " bytes, header implies " +
                          std::to_string(payload),
                      r.offset());
  }
  std::vector<float> data(static_cast<std::size_t>(t) * p * 3);
  r.f32s(data);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) throw FormatError("non-finite coordinate", kSequenceHeaderBytes + 4 * i);
  }
  return PointSequence<Tag>(static_cast<int>(t), static_cast<int>(p), std::move(data));
}

}  // namespace

void write_cuboid(const std::filesystem::path& path, const MeshCuboid& c) { write_sequence(path, c); }
MeshCuboid read_cuboid(const std::filesystem::path& path) { return read_sequence<CuboidTag>(path); }
void write_joints(const std::filesystem::path& path, const JointSeq& j) { write_sequence(path, j); }
JointSeq read_joints(const std::filesystem::path& path) { return read_sequence<JointTag>(path); }

std::vector<int> sample_clip(int total_frames, int stride, int clip_length, SampleMode mode,
                             std::uint64_t seed) {
  if (stride < 1) throw std::invalid_argument("stride must be >= 1");
  if (clip_length < 1) throw std::invalid_argument("clip length must be >= 1");
  if (total_frames < 0) throw std::invalid_argument("total_frames must be >= 0");
  const int strided = (total_frames + stride - 1) / stride;
  if (strided < clip_length) {
    throw std::invalid_argument("only " + std::to_string(strided) + " frames remain after stride " +
                                std::to_string(stride) + " (from " + std::to_string(total_frames) +
                                "), need " + std::to_string(clip_length));
  }
  int start = (strided - clip_length) / 2;
  if (mode == SampleMode::kTrain) {
    std::mt19937_64 rng(seed);
    start = std::uniform_int_distribution<int>(0, strided - clip_length)(rng);
  }
  std::vector<int> frames(clip_length);
  for (int i = 0; i < clip_length; ++i) frames[i] = (start + i) * stride;
  return frames;
}

void ClipManifest::validate(const std::filesystem::path& base_dir) const {
  if (stride < 1) throw std::invalid_argument("clip " + source_id + ": stride must be >= 1");
  if (length < 1) throw std::invalid_argument("clip " + source_id + ": length must be >= 1");
  const MeshCuboid c = read_cuboid(base_dir / cuboid);
  if (c.frames() != length) {
    throw std::invalid_argument("clip " + source_id + ": manifest length " + std::to_string(length) +
                                " but cuboid has " + std::to_string(c.frames()) + " frames");
  }
}

void to_json(nlohmann::json& j, const ClipManifest& m) {
  j = nlohmann::json{{"source_id", m.source_id}, {"frame_rate", m.frame_rate},
                     {"stride", m.stride},       {"start", m.start},
                     {"length", m.length},       {"cuboid", m.cuboid},
                     {"joints", m.joints}};
  if (!m.gt_cuboid.empty()) j["gt_cuboid"] = m.gt_cuboid;
}

void from_json(const nlohmann::json& j, ClipManifest& m) {
  j.at("source_id").get_to(m.source_id);
  j.at("frame_rate").get_to(m.frame_rate);
  j.at("stride").get_to(m.stride);
  j.at("start").get_to(m.start);
  j.at("length").get_to(m.length);
  j.at("cuboid").get_to(m.cuboid);
  j.at("joints").get_to(m.joints);
  m.gt_cuboid = j.value("gt_cuboid", std::string());
}

}  // namespace mvai
