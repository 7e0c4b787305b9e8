#include "xpcg/level.hpp"

#include <fstream>
#include <sstream>

#include "xpcg/error.hpp"

namespace xpcg {

LevelGrid::LevelGrid(int width, int height)
    : width_(width), height_(height),
      cells_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), kEmptyCell) {
  if (width < 0 || height < 0) throw validation_error("InvalidSize", "negative level size");
}

LevelGrid LevelGrid::window(int x, int y, int w, int h) const {
  if (x < 0 || y < 0 || x + w > width_ || y + h > height_) {
    throw validation_error("OutOfBounds", "window exceeds level bounds");
  }
  LevelGrid out(w, h);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) out.set(c, r, at(x + c, y + r));
  }
  return out;
}

LevelGrid parse_level(std::string_view text, const TileRegistry& registry, int min_size) {
  std::vector<std::string_view> rows;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view row = text.substr(pos, end - pos);
    if (!row.empty() && row.back() == '\r') row.remove_suffix(1);
    rows.push_back(row);
    pos = end + 1;
  }
  while (!rows.empty() && rows.back().empty()) rows.pop_back();

  const int height = static_cast<int>(rows.size());
  const int width = rows.empty() ? 0 : static_cast<int>(rows.front().size());
  for (int y = 0; y < height; ++y) {
    if (static_cast<int>(rows[static_cast<std::size_t>(y)].size()) != width) {
      throw validation_error("RaggedRows", "row " + std::to_string(y) + " has length " +
                                               std::to_string(rows[static_cast<std::size_t>(y)].size()) +
                                               ", expected " + std::to_string(width));
    }
  }
  if (width < min_size || height < min_size) {
    throw validation_error("TooSmall", "level is " + std::to_string(width) + "x" +
                                           std::to_string(height) + "; both sides must be >= " +
                                           std::to_string(min_size));
  }

  LevelGrid grid(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const char g = rows[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)];
      if (g == kEmptyGlyph) continue;
      const int id = registry.id_for(g);
      if (id < 0) {
        throw validation_error("UnknownGlyph", std::string("unknown glyph '") + g + "' at (" +
                                                   std::to_string(x) + ", " + std::to_string(y) + ")");
      }
      grid.set(x, y, id);
    }
  }
  return grid;
}

std::string serialize_level(const LevelGrid& grid, const TileRegistry& registry) {
  std::string out;
  out.reserve(static_cast<std::size_t>((grid.width() + 1) * grid.height()));
  for (int y = 0; y < grid.height(); ++y) {
    for (int x = 0; x < grid.width(); ++x) {
      const int t = grid.at(x, y);
      out.push_back(t == kEmptyCell ? kEmptyGlyph : registry.glyph(t));
    }
    out.push_back('\n');
  }
  return out;
}

LevelGrid read_level_file(const std::string& path, const TileRegistry& registry) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::NotFound, "FileNotFound", "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_level(ss.str(), registry);
}

void write_level_file(const std::string& path, const LevelGrid& grid, const TileRegistry& registry) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Runtime, "IoError", "cannot write " + path);
  out << serialize_level(grid, registry);
}

}  // namespace xpcg
