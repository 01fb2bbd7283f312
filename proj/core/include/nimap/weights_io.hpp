#pragma once

#include <filesystem>
#include <iosfwd>

#include "nimap/codec.hpp"

namespace nimap {

// --- encoder weight file (little-endian) --------------------------------
// magic "VNNW" | u32 version | u32 tensorCount
// per tensor: u32 rows | u32 cols | f32[rows*cols] row-major.
// Tensors appear as point branch then normal branch, each
// lin1, relu1 feature map, relu1 direction map, lin2, relu2 feature map,
// relu2 direction map, lin3.
void serializeEncoder(const EncoderParams& enc, std::ostream& out);
EncoderParams deserializeEncoder(std::istream& in);
void saveEncoder(const EncoderParams& enc, const std::filesystem::path& path);
EncoderParams loadEncoder(const std::filesystem::path& path);

// --- codec file ----------------------------------------------------------
// magic "NICD" | u32 version | u32 latentRows | f64 voxelSize
// | u32 layerCount | u32 widths[layerCount] (decoder output widths)
// | encoder tensor block (as above, without its own magic)
// | decoder tensor block: per layer weight then bias (bias stored n x 1).
void serializeCodec(const Codec& codec, std::ostream& out);
Codec deserializeCodec(std::istream& in);
void saveCodec(const Codec& codec, const std::filesystem::path& path);
Codec loadCodec(const std::filesystem::path& path);

}  // namespace nimap
