#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace xpcg {

inline constexpr int kTileClasses = 30;
inline constexpr char kEmptyGlyph = '-';

struct TileClass {
  int id = 0;
  char glyph = '?';
  std::string name;
};

/// The 30-class tile alphabet. Ids are a bijection onto [0, 29]; glyphs are
/// unique printable characters other than '-'.
class TileRegistry {
 public:
  static const TileRegistry& builtin();

  /// Validates and builds a registry from `[{id, glyph, name}, ...]`.
  static TileRegistry from_json(const nlohmann::json& j);
  static TileRegistry load(const std::string& path);
  nlohmann::json to_json() const;

  int version() const { return version_; }
  const std::vector<TileClass>& classes() const { return classes_; }
  const TileClass& at(int id) const { return classes_.at(static_cast<std::size_t>(id)); }
  char glyph(int id) const { return at(id).glyph; }

  /// Class id for a glyph, or -1 when the glyph is not registered.
  int id_for(char glyph) const {
    return by_glyph_[static_cast<unsigned char>(glyph)];
  }
  int id_for(const std::string& name) const;

 private:
  explicit TileRegistry(std::vector<TileClass> classes, int version);

  std::vector<TileClass> classes_;
  std::array<std::int8_t, 256> by_glyph_{};
  int version_ = 1;
};

}  // namespace xpcg
