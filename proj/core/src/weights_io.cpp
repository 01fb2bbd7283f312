#include "nimap/weights_io.hpp"

#include <fstream>

#include "nimap/detail/binary.hpp"

namespace nimap {

namespace {

constexpr char kEncoderMagic[4] = {'V', 'N', 'N', 'W'};
constexpr char kCodecMagic[4] = {'N', 'I', 'C', 'D'};
constexpr std::uint32_t kFormatVersion = 1;
constexpr std::uint32_t kMaxDim = 1 << 20;

void writeMatrix(std::ostream& out, const Eigen::MatrixXd& m) {
  detail::writeU32(out, static_cast<std::uint32_t>(m.rows()));
  detail::writeU32(out, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      detail::writeF32(out, static_cast<float>(m(r, c)));
    }
  }
}

Eigen::MatrixXd readMatrix(std::istream& in) {
  const std::uint32_t rows = detail::readU32(in);
  const std::uint32_t cols = detail::readU32(in);
  if (rows == 0 || cols == 0 || rows > kMaxDim || cols > kMaxDim) {
    throw FormatError("weight tensor with implausible shape");
  }
  Eigen::MatrixXd m(rows, cols);
  for (std::uint32_t r = 0; r < rows; ++r) {
    for (std::uint32_t c = 0; c < cols; ++c) {
      m(r, c) = detail::readF32(in);
      if (!std::isfinite(m(r, c))) {
        throw FormatError("weight tensor with non-finite entry");
      }
    }
  }
  return m;
}

void writeBranch(std::ostream& out, const VNBranch& b) {
  writeMatrix(out, b.lin1.weight);
  writeMatrix(out, b.relu1.featMap);
  writeMatrix(out, b.relu1.dirMap);
  writeMatrix(out, b.lin2.weight);
  writeMatrix(out, b.relu2.featMap);
  writeMatrix(out, b.relu2.dirMap);
  writeMatrix(out, b.lin3.weight);
}

VNBranch readBranch(std::istream& in) {
  VNBranch b;
  b.lin1.weight = readMatrix(in);
  b.relu1.featMap = readMatrix(in);
  b.relu1.dirMap = readMatrix(in);
  b.lin2.weight = readMatrix(in);
  b.relu2.featMap = readMatrix(in);
  b.relu2.dirMap = readMatrix(in);
  b.lin3.weight = readMatrix(in);
  const Eigen::Index h = b.lin1.outChannels();
  if (b.relu1.featMap.rows() != h || b.relu1.featMap.cols() != h ||
      b.relu1.dirMap.rows() != h || b.relu1.dirMap.cols() != h || b.lin2.inChannels() != h ||
      b.lin2.outChannels() != b.relu2.featMap.cols() ||
      b.relu2.featMap.rows() != b.relu2.featMap.cols() ||
      b.relu2.dirMap.rows() != b.relu2.featMap.rows() ||
      b.relu2.dirMap.cols() != b.relu2.featMap.cols() ||
      b.lin3.inChannels() != b.lin2.outChannels()) {
    throw FormatError("encoder branch tensors are mutually inconsistent");
  }
  return b;
}

constexpr std::uint32_t kTensorsPerBranch = 7;

}  // namespace

void serializeEncoder(const EncoderParams& enc, std::ostream& out) {
  detail::writeMagic(out, kEncoderMagic);
  detail::writeU32(out, kFormatVersion);
  detail::writeU32(out, 2 * kTensorsPerBranch);
  writeBranch(out, enc.point);
  writeBranch(out, enc.normal);
  if (!out) {
    throw IoError("serializeEncoder: write failed");
  }
}

EncoderParams deserializeEncoder(std::istream& in) {
  detail::expectMagic(in, kEncoderMagic, "encoder file");
  detail::expectVersion(in, kFormatVersion, "encoder file");
  const std::uint32_t count = detail::readU32(in);
  if (count != 2 * kTensorsPerBranch) {
    throw FormatError("encoder file: unexpected tensor count " + std::to_string(count));
  }
  EncoderParams enc;
  enc.point = readBranch(in);
  enc.normal = readBranch(in);
  if (enc.point.latentRows() != enc.normal.latentRows()) {
    throw FormatError("encoder file: branch latent sizes differ");
  }
  return enc;
}

void saveEncoder(const EncoderParams& enc, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot open for writing: " + path.string());
  }
  serializeEncoder(enc, out);
}

EncoderParams loadEncoder(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open: " + path.string());
  }
  return deserializeEncoder(in);
}

void serializeCodec(const Codec& codec, std::ostream& out) {
  detail::writeMagic(out, kCodecMagic);
  detail::writeU32(out, kFormatVersion);
  detail::writeU32(out, static_cast<std::uint32_t>(codec.encoder.latentRows()));
  detail::writeF64(out, codec.voxelSize);
  detail::writeU32(out, static_cast<std::uint32_t>(codec.decoder.weights.size()));
  for (const auto& w : codec.decoder.weights) {
    detail::writeU32(out, static_cast<std::uint32_t>(w.rows()));
  }
  detail::writeU32(out, 2 * kTensorsPerBranch);
  writeBranch(out, codec.encoder.point);
  writeBranch(out, codec.encoder.normal);
  for (std::size_t k = 0; k < codec.decoder.weights.size(); ++k) {
    writeMatrix(out, codec.decoder.weights[k]);
    writeMatrix(out, codec.decoder.biases[k]);
  }
  if (!out) {
    throw IoError("serializeCodec: write failed");
  }
}

Codec deserializeCodec(std::istream& in) {
  detail::expectMagic(in, kCodecMagic, "codec file");
  detail::expectVersion(in, kFormatVersion, "codec file");
  const std::uint32_t latent = detail::readU32(in);
  if (latent == 0 || latent > 1024) {
    throw FormatError("codec file: implausible latent size");
  }
  Codec codec;
  codec.voxelSize = detail::readF64(in);
  if (!(codec.voxelSize > 0.0) || !std::isfinite(codec.voxelSize)) {
    throw FormatError("codec file: non-positive voxel size");
  }
  const std::uint32_t layers = detail::readU32(in);
  if (layers == 0 || layers > 64) {
    throw FormatError("codec file: implausible decoder depth");
  }
  std::vector<std::uint32_t> widths(layers);
  for (auto& w : widths) {
    w = detail::readU32(in);
  }
  const std::uint32_t count = detail::readU32(in);
  if (count != 2 * kTensorsPerBranch) {
    throw FormatError("codec file: unexpected encoder tensor count");
  }
  codec.encoder.point = readBranch(in);
  codec.encoder.normal = readBranch(in);
  if (codec.encoder.latentRows() != static_cast<Eigen::Index>(latent)) {
    throw FormatError("codec file: header latent size disagrees with tensors");
  }
  for (std::uint32_t k = 0; k < layers; ++k) {
    Eigen::MatrixXd w = readMatrix(in);
    Eigen::MatrixXd b = readMatrix(in);
    if (w.rows() != static_cast<Eigen::Index>(widths[k]) || b.cols() != 1 ||
        b.rows() != w.rows()) {
      throw FormatError("codec file: decoder layer shape disagrees with header");
    }
    codec.decoder.weights.push_back(std::move(w));
    codec.decoder.biases.push_back(Eigen::VectorXd(b.col(0)));
  }
  if (codec.decoder.inputWidth() != 6 * codec.encoder.latentRows() + 3) {
    throw FormatError("codec file: decoder input width disagrees with latent size");
  }
  return codec;
}

void saveCodec(const Codec& codec, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot open for writing: " + path.string());
  }
  serializeCodec(codec, out);
}

Codec loadCodec(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open: " + path.string());
  }
  return deserializeCodec(in);
}

}  // namespace nimap
