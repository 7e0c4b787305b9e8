#include "xpcg/tiles.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "xpcg/error.hpp"

namespace xpcg {
namespace {

std::vector<TileClass> builtin_classes() {
  return {
      {0, 'X', "ground"},          {1, 'B', "brick"},
      {2, '?', "question-block"},  {3, 'U', "used-block"},
      {4, '#', "stair-block"},     {5, '[', "pipe-top-left"},
      {6, ']', "pipe-top-right"},  {7, '<', "pipe-body-left"},
      {8, '>', "pipe-body-right"}, {9, 'g', "goomba"},
      {10, 'k', "koopa"},          {11, 'r', "red-koopa"},
      {12, 'p', "piranha-plant"},  {13, 'b', "buzzy-beetle"},
      {14, 'h', "hammer-bro"},     {15, 'o', "coin"},
      {16, 'M', "powerup-block"},  {17, 'H', "hidden-block"},
      {18, 'C', "cannon"},         {19, '=', "platform"},
      {20, 'T', "tree-top"},       {21, '(', "bush-left"},
      {22, ')', "bush-right"},     {23, '{', "cloud-left"},
      {24, '}', "cloud-right"},    {25, '^', "hill-top"},
      {26, '/', "hill-side"},      {27, 'F', "flag-top"},
      {28, '|', "flagpole"},       {29, 'S', "springboard"},
  };
}

}  // namespace

TileRegistry::TileRegistry(std::vector<TileClass> classes, int version)
    : classes_(std::move(classes)), version_(version) {
  if (classes_.size() != static_cast<std::size_t>(kTileClasses)) {
    throw validation_error("InvalidRegistry", "tile registry must define exactly 30 classes");
  }
  by_glyph_.fill(-1);
  std::vector<bool> seen(kTileClasses, false);
  for (const auto& c : classes_) {
    if (c.id < 0 || c.id >= kTileClasses || seen[static_cast<std::size_t>(c.id)]) {
      throw validation_error("InvalidRegistry", "tile ids must be a bijection onto [0, 29]");
    }
    seen[static_cast<std::size_t>(c.id)] = true;
    const auto g = static_cast<unsigned char>(c.glyph);
    if (c.glyph == kEmptyGlyph || !std::isgraph(g) || by_glyph_[g] != -1) {
      throw validation_error("InvalidRegistry",
                             std::string("glyph '") + c.glyph + "' is reserved, unprintable or duplicated");
    }
    by_glyph_[g] = static_cast<std::int8_t>(c.id);
  }
  std::sort(classes_.begin(), classes_.end(),
            [](const TileClass& a, const TileClass& b) { return a.id < b.id; });
}

const TileRegistry& TileRegistry::builtin() {
  static const TileRegistry registry(builtin_classes(), 1);
  return registry;
}

TileRegistry TileRegistry::from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw validation_error("InvalidRegistry", "tile registry must be a JSON list");
  std::vector<TileClass> classes;
  for (const auto& item : j) {
    const auto glyph = item.at("glyph").get<std::string>();
    if (glyph.size() != 1) throw validation_error("InvalidRegistry", "glyph must be one character");
    classes.push_back({item.at("id").get<int>(), glyph[0], item.at("name").get<std::string>()});
  }
  return TileRegistry(std::move(classes), 1);
}

TileRegistry TileRegistry::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::NotFound, "FileNotFound", "cannot open " + path);
  return from_json(nlohmann::json::parse(in));
}

nlohmann::json TileRegistry::to_json() const {
  auto out = nlohmann::json::array();
  for (const auto& c : classes_) {
    out.push_back({{"id", c.id}, {"glyph", std::string(1, c.glyph)}, {"name", c.name}});
  }
  return out;
}

int TileRegistry::id_for(const std::string& name) const {
  for (const auto& c : classes_) {
    if (c.name == name) return c.id;
  }
  return -1;
}

}  // namespace xpcg
