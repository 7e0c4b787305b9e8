#include "xpcg/chunk.hpp"

#include "xpcg/error.hpp"

namespace xpcg {

std::vector<float> Chunk::to_floats() const {
  std::vector<float> out(kChunkFeatures);
  write_floats(out);
  return out;
}

void Chunk::write_floats(std::span<float> out) const {
  for (int i = 0; i < kChunkFeatures; ++i) out[static_cast<std::size_t>(i)] = bits.test(static_cast<std::size_t>(i)) ? 1.0f : 0.0f;
}

Chunk Chunk::from_grid(const LevelGrid& window8) {
  Chunk c;
  for (int r = 0; r < kChunkSize; ++r) {
    for (int col = 0; col < kChunkSize; ++col) {
      const int t = window8.at(col, r);
      if (t != kEmptyCell) c.bits.set(static_cast<std::size_t>(feature_index(r, col, t)));
    }
  }
  return c;
}

Chunk encode_chunk(const LevelGrid& grid, int x, int y) {
  if (x < 0 || y < 0 || x > grid.width() - kChunkSize || y > grid.height() - kChunkSize) {
    throw validation_error("OutOfBounds", "chunk origin (" + std::to_string(x) + ", " +
                                              std::to_string(y) + ") outside level");
  }
  Chunk c;
  for (int r = 0; r < kChunkSize; ++r) {
    for (int col = 0; col < kChunkSize; ++col) {
      const int t = grid.at(x + col, y + r);
      if (t != kEmptyCell) c.bits.set(static_cast<std::size_t>(feature_index(r, col, t)));
    }
  }
  return c;
}

LevelGrid decode_chunk(std::span<const float> tensor, double threshold) {
  if (tensor.size() != static_cast<std::size_t>(kChunkFeatures)) {
    throw validation_error("ShapeMismatch", "decode_chunk expects 1920 values");
  }
  LevelGrid out(kChunkSize, kChunkSize);
  for (int r = 0; r < kChunkSize; ++r) {
    for (int c = 0; c < kChunkSize; ++c) {
      int best = 0;
      float best_v = tensor[static_cast<std::size_t>(feature_index(r, c, 0))];
      for (int k = 1; k < kTileClasses; ++k) {
        const float v = tensor[static_cast<std::size_t>(feature_index(r, c, k))];
        if (v > best_v) {
          best_v = v;
          best = k;
        }
      }
      if (best_v >= threshold) out.set(c, r, best);
    }
  }
  return out;
}

LevelGrid decode_chunk(const Chunk& chunk) {
  return decode_chunk(chunk.to_floats(), 0.5);
}

}  // namespace xpcg
