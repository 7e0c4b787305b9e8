#pragma once

#include <bitset>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xpcg/level.hpp"

namespace xpcg {

inline constexpr int kChunkSize = 8;
inline constexpr int kChunkFeatures = kChunkSize * kChunkSize * kTileClasses;  // 1920

/// Flat feature index of (row, col, class) in the 8x8x30 tensor.
constexpr int feature_index(int row, int col, int tile) {
  return (row * kChunkSize + col) * kTileClasses + tile;
}

struct ChunkOrigin {
  std::string level_id;
  int x = 0;
  int y = 0;
  bool operator==(const ChunkOrigin&) const = default;
};

/// One-hot 8x8x30 window. Each (row, col) fiber holds at most one set bit; an
/// all-zero fiber is an empty tile.
struct Chunk {
  std::bitset<kChunkFeatures> bits;
  std::optional<ChunkOrigin> origin;

  bool test(int row, int col, int tile) const { return bits.test(static_cast<std::size_t>(feature_index(row, col, tile))); }

  /// Dense 1920-float view for the neural models.
  std::vector<float> to_floats() const;
  void write_floats(std::span<float> out) const;

  static Chunk from_grid(const LevelGrid& window8);

  bool operator==(const Chunk& other) const { return bits == other.bits; }
};

/// Encodes the 8x8 window whose top-left is (x, y). Throws OutOfBounds.
Chunk encode_chunk(const LevelGrid& grid, int x, int y);

/// Per tile: Empty when the class-axis maximum is below `threshold`, otherwise
/// the argmax class (lowest id wins ties).
LevelGrid decode_chunk(std::span<const float> tensor, double threshold = 0.5);

/// Decodes an exact one-hot chunk.
LevelGrid decode_chunk(const Chunk& chunk);

}  // namespace xpcg
