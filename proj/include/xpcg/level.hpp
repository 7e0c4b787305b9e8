#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "xpcg/tiles.hpp"

namespace xpcg {

inline constexpr int kEmptyCell = -1;

/// Rectangular tile map. Cells hold a tile class id or kEmptyCell; (x, y) is
/// column, row with y growing downward.
class LevelGrid {
 public:
  LevelGrid() = default;
  LevelGrid(int width, int height);

  int width() const { return width_; }
  int height() const { return height_; }

  int at(int x, int y) const { return cells_[index(x, y)]; }
  void set(int x, int y, int tile) { cells_[index(x, y)] = static_cast<std::int8_t>(tile); }
  bool empty_at(int x, int y) const { return at(x, y) == kEmptyCell; }
  bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }

  /// Copy of the w x h window whose top-left is (x, y).
  LevelGrid window(int x, int y, int w, int h) const;

  bool operator==(const LevelGrid&) const = default;

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::int8_t> cells_;
};

/// A level with its stable identifier (file stem or content hash).
struct Level {
  std::string id;
  LevelGrid grid;
};

/// Parses newline-separated rows of glyphs. Throws RaggedRows, UnknownGlyph or
/// TooSmall (either dimension below 8). A trailing newline is allowed; '\r' is
/// stripped.
LevelGrid parse_level(std::string_view text, const TileRegistry& registry = TileRegistry::builtin(),
                      int min_size = 8);

/// One row per line, each terminated by '\n'.
std::string serialize_level(const LevelGrid& grid,
                            const TileRegistry& registry = TileRegistry::builtin());

LevelGrid read_level_file(const std::string& path,
                          const TileRegistry& registry = TileRegistry::builtin());
void write_level_file(const std::string& path, const LevelGrid& grid,
                      const TileRegistry& registry = TileRegistry::builtin());

}  // namespace xpcg
