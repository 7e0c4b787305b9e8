#include "xpcg/eval/corpus.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "xpcg/error.hpp"
#include "xpcg/rng.hpp"

namespace xpcg::eval {
namespace {

namespace fs = std::filesystem;

// Builtin tile ids.
constexpr int kGround = 0;
constexpr int kBrick = 1;
constexpr int kQuestion = 2;
constexpr int kStair = 4;
constexpr int kPipeTopL = 5;
constexpr int kPipeTopR = 6;
constexpr int kPipeL = 7;
constexpr int kPipeR = 8;
constexpr int kGoomba = 9;
constexpr int kKoopa = 10;
constexpr int kRedKoopa = 11;
constexpr int kBuzzy = 13;
constexpr int kCoin = 15;
constexpr int kPowerup = 16;
constexpr int kPlatform = 19;
constexpr int kBushL = 21;
constexpr int kBushR = 22;
constexpr int kCloudL = 23;
constexpr int kCloudR = 24;
constexpr int kHillTop = 25;
constexpr int kHillSide = 26;

constexpr int kArc[5] = {0, 1, 2, 1, 0};

Error invalid_spec(const std::string& why) { return validation_error("InvalidSpec", why); }

bool is_enemy(int t) { return t == kGoomba || t == kKoopa || t == kRedKoopa || t == kBuzzy; }

struct Instance {
  std::string pattern;
  int width = 0;  // columns the annotation covers
  int a = 0;      // rule parameters, see render()
  int b = 0;
};

Instance roll_instance(const std::string& pattern, Rng& rng) {
  Instance in{pattern};
  if (pattern == "staircase") {
    in.a = static_cast<int>(rng.range(3, 5));  // steps
    in.b = rng.chance(0.5);                   // descending
    in.width = in.a;
  } else if (pattern == "gap") {
    in.a = static_cast<int>(rng.range(2, 4));
    in.width = in.a + 2;
  } else if (pattern == "enemy-pair") {
    in.a = static_cast<int>(rng.range(1, 3));  // distance
    in.b = rng.chance(0.5) ? kKoopa : kGoomba;
    in.width = in.a + 1;
  } else if (pattern == "pipe") {
    in.a = static_cast<int>(rng.range(2, 4));
    in.width = 2;
  } else if (pattern == "coin-arc") {
    in.a = static_cast<int>(rng.range(8, 10));  // base row
    in.width = 5;
  } else {  // platform-run
    in.a = static_cast<int>(rng.range(4, 7));
    in.b = static_cast<int>(rng.range(7, 9));  // row
    in.width = in.a;
  }
  return in;
}

PatternAnnotation render(const Instance& in, int x, LevelGrid& g, const std::string& level_id) {
  PatternAnnotation ann{level_id, x, 0, in.width, 1, in.pattern, AnnotationOrigin::Hand};
  if (in.pattern == "staircase") {
    const int k = in.a;
    for (int i = 0; i < k; ++i) {
      const int height = in.b ? k - i : i + 1;
      for (int r = 0; r < height; ++r) g.set(x + i, kGroundRow - 1 - r, kStair);
    }
    ann.y = kGroundRow - k;
    ann.h = k;
  } else if (in.pattern == "gap") {
    for (int i = 1; i <= in.a; ++i) {
      g.set(x + i, kGroundRow, kEmptyCell);
      g.set(x + i, kGroundRow + 1, kEmptyCell);
    }
    ann.y = kGroundRow - 2;
    ann.h = 4;
  } else if (in.pattern == "enemy-pair") {
    g.set(x, kGroundRow - 1, in.b);
    g.set(x + in.a, kGroundRow - 1, in.b);
    ann.y = kGroundRow - 2;
    ann.h = 2;
  } else if (in.pattern == "pipe") {
    const int top = kGroundRow - in.a;
    g.set(x, top, kPipeTopL);
    g.set(x + 1, top, kPipeTopR);
    for (int r = top + 1; r < kGroundRow; ++r) {
      g.set(x, r, kPipeL);
      g.set(x + 1, r, kPipeR);
    }
    ann.y = top;
    ann.h = in.a;
  } else if (in.pattern == "coin-arc") {
    for (int i = 0; i < 5; ++i) g.set(x + i, in.a - kArc[i], kCoin);
    ann.y = in.a - 2;
    ann.h = 3;
  } else {
    for (int i = 0; i < in.a; ++i) g.set(x + i, in.b, kPlatform);
    ann.y = in.b;
    ann.h = 1;
  }
  return ann;
}

bool ground_at(const LevelGrid& g, int x) {
  return g.at(x, kGroundRow) == kGround && g.at(x, kGroundRow + 1) == kGround;
}

bool rect_cells(const LevelGrid& g, const PatternAnnotation& a, const auto& expected) {
  for (int y = a.y; y < a.y + a.h; ++y) {
    for (int x = a.x; x < a.x + a.w; ++x) {
      if (g.at(x, y) != expected(x - a.x, y - a.y)) return false;
    }
  }
  return true;
}

bool staircase_holds(const LevelGrid& g, const PatternAnnotation& a) {
  const int k = a.w;
  if (k < 3 || k > 5 || a.h != k || a.y + a.h != kGroundRow) return false;
  for (int desc = 0; desc < 2; ++desc) {
    const auto expected = [&](int dx, int dy) {
      const int height = desc ? k - dx : dx + 1;
      return dy >= k - height ? kStair : kEmptyCell;
    };
    if (!rect_cells(g, a, expected)) continue;
    bool ok = true;
    for (int x = a.x; x < a.x + k; ++x) ok = ok && ground_at(g, x);
    if (a.x > 0) ok = ok && g.at(a.x - 1, kGroundRow - 1) != kStair;
    if (a.x + k < g.width()) ok = ok && g.at(a.x + k, kGroundRow - 1) != kStair;
    if (ok) return true;
  }
  return false;
}

bool gap_holds(const LevelGrid& g, const PatternAnnotation& a) {
  if (a.w < 4 || a.w > 6 || a.h != 4 || a.y != kGroundRow - 2) return false;
  const auto expected = [&](int dx, int dy) {
    const bool flank = dx == 0 || dx == a.w - 1;
    return flank && dy >= 2 ? kGround : kEmptyCell;
  };
  return rect_cells(g, a, expected);
}

bool enemy_pair_holds(const LevelGrid& g, const PatternAnnotation& a) {
  if (a.w < 2 || a.w > 4 || a.h != 2 || a.y != kGroundRow - 2) return false;
  const int kind = g.at(a.x, kGroundRow - 1);
  if (kind != kGoomba && kind != kKoopa) return false;
  const auto expected = [&](int dx, int dy) {
    return dy == 1 && (dx == 0 || dx == a.w - 1) ? kind : kEmptyCell;
  };
  return rect_cells(g, a, expected) && ground_at(g, a.x) && ground_at(g, a.x + a.w - 1);
}

bool pipe_holds(const LevelGrid& g, const PatternAnnotation& a) {
  if (a.w != 2 || a.h < 2 || a.h > 4 || a.y + a.h != kGroundRow) return false;
  const auto expected = [&](int dx, int dy) {
    if (dy == 0) return dx == 0 ? kPipeTopL : kPipeTopR;
    return dx == 0 ? kPipeL : kPipeR;
  };
  return rect_cells(g, a, expected) && ground_at(g, a.x) && ground_at(g, a.x + 1);
}

bool coin_arc_holds(const LevelGrid& g, const PatternAnnotation& a) {
  if (a.w != 5 || a.h != 3) return false;
  const auto expected = [&](int dx, int dy) { return dy == 2 - kArc[dx] ? kCoin : kEmptyCell; };
  return rect_cells(g, a, expected);
}

bool platform_run_holds(const LevelGrid& g, const PatternAnnotation& a) {
  if (a.w < 4 || a.w > 7 || a.h != 1 || a.y < 7 || a.y > 9) return false;
  if (!rect_cells(g, a, [](int, int) { return kPlatform; })) return false;
  if (a.x > 0 && g.at(a.x - 1, a.y) == kPlatform) return false;
  if (a.x + a.w < g.width() && g.at(a.x + a.w, a.y) == kPlatform) return false;
  for (int x = a.x; x < a.x + a.w; ++x) {
    if (!g.empty_at(x, a.y + 1)) return false;
  }
  return true;
}

class LevelBuilder {
 public:
  LevelBuilder(int width, const std::set<std::string>& requested, double density, Rng& rng)
      : grid_(width, kCorpusHeight), requested_(requested), density_(density), rng_(rng) {
    for (int x = 0; x < width; ++x) {
      grid_.set(x, kGroundRow, kGround);
      grid_.set(x, kGroundRow + 1, kGround);
    }
  }

  LevelGrid& grid() { return grid_; }

  void note_enemies(int x0, int x1) {
    for (int x = x0; x < x1; ++x) {
      if (is_enemy(grid_.at(x, kGroundRow - 1))) enemies_.push_back(x);
    }
  }

  /// Fills columns [a, b) with distractor structure.
  void fill(int a, int b) {
    int c = a;
    while (c < b) {
      if (!rng_.chance(density_)) {
        ++c;
        continue;
      }
      const int used = place_distractor(c, b);
      c += used > 0 ? used + 1 : 1;
    }
  }

  /// Clouds anywhere in the sky band, rows 1-4.
  void sky() {
    for (int x = 0; x + 1 < grid_.width(); ++x) {
      if (!rng_.chance(0.06)) continue;
      const int row = static_cast<int>(rng_.range(1, 4));
      grid_.set(x, row, kCloudL);
      grid_.set(x + 1, row, kCloudR);
      x += 2;
    }
  }

 private:
  int place_distractor(int c, int end) {
    std::vector<int> kinds = {0, 1, 2, 3, 4};  // bush, hill, blocks, coin, enemy
    if (!requested_.count("pipe")) kinds.push_back(5);
    if (!requested_.count("platform-run")) kinds.push_back(6);
    if (!requested_.count("coin-arc")) kinds.push_back(7);
    const int kind = kinds[rng_.below(kinds.size())];
    const int room = end - c;
    switch (kind) {
      case 0:
        if (room < 2) return 0;
        grid_.set(c, kGroundRow - 1, kBushL);
        grid_.set(c + 1, kGroundRow - 1, kBushR);
        return 2;
      case 1:
        if (room < 3) return 0;
        grid_.set(c, kGroundRow - 1, kHillSide);
        grid_.set(c + 1, kGroundRow - 1, kHillSide);
        grid_.set(c + 2, kGroundRow - 1, kHillSide);
        grid_.set(c + 1, kGroundRow - 2, kHillTop);
        return 3;
      case 2: {
        const int len = std::min(room, static_cast<int>(rng_.range(1, 3)));
        const int row = static_cast<int>(rng_.range(7, 8));
        static constexpr int kBlocks[3] = {kBrick, kQuestion, kPowerup};
        for (int i = 0; i < len; ++i) grid_.set(c + i, row, kBlocks[rng_.below(3)]);
        return len;
      }
      case 3:
        grid_.set(c, static_cast<int>(rng_.range(6, 9)), kCoin);
        return 1;
      case 4: {
        for (int e : enemies_) {
          if (std::abs(e - c) <= 4) return 0;
        }
        static constexpr int kSolo[4] = {kGoomba, kKoopa, kRedKoopa, kBuzzy};
        grid_.set(c, kGroundRow - 1, kSolo[rng_.below(4)]);
        enemies_.push_back(c);
        return 1;
      }
      case 5:
        if (room < 2) return 0;
        render(Instance{"pipe", 2, static_cast<int>(rng_.range(2, 4)), 0}, c, grid_, "");
        return 2;
      case 6: {
        if (room < 4) return 0;
        const int len = std::min(room, static_cast<int>(rng_.range(4, 7)));
        render(Instance{"platform-run", len, len, static_cast<int>(rng_.range(7, 9))}, c, grid_, "");
        return len;
      }
      default:
        if (room < 5) return 0;
        render(Instance{"coin-arc", 5, static_cast<int>(rng_.range(8, 10)), 0}, c, grid_, "");
        return 5;
    }
  }

  LevelGrid grid_;
  const std::set<std::string>& requested_;
  double density_;
  Rng& rng_;
  std::vector<int> enemies_;
};

std::string level_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "synth-%03d", index);
  return buf;
}

}  // namespace

const std::vector<std::string>& pattern_rules() {
  static const std::vector<std::string> rules = {"staircase", "gap", "enemy-pair", "pipe", "coin-arc", "platform-run"};
  return rules;
}

CorpusSpec CorpusSpec::default_spec() {
  CorpusSpec s;
  s.patterns = {{"staircase", 40}, {"gap", 40}, {"enemy-pair", 40}};
  return s;
}

void CorpusSpec::validate() const {
  if (levels < 1) throw invalid_spec("need at least one level");
  if (width < 8) throw invalid_spec("levels must be at least 8 wide");
  if (distractor_density < 0.0 || distractor_density > 1.0) throw invalid_spec("distractor density outside [0, 1]");
  std::set<std::string> seen;
  for (const auto& p : patterns) {
    if (std::find(pattern_rules().begin(), pattern_rules().end(), p.pattern) == pattern_rules().end()) {
      throw invalid_spec("unknown pattern rule '" + p.pattern + "'");
    }
    if (!seen.insert(p.pattern).second) throw invalid_spec("pattern '" + p.pattern + "' listed twice");
    if (p.count < 0) throw invalid_spec("negative count for '" + p.pattern + "'");
  }
}

nlohmann::json CorpusSpec::to_json() const {
  nlohmann::json pats = nlohmann::json::array();
  for (const auto& p : patterns) pats.push_back({{"pattern", p.pattern}, {"count", p.count}});
  return {{"levels", levels}, {"width", width}, {"height", kCorpusHeight}, {"patterns", pats},
          {"distractor_density", distractor_density}};
}

CorpusSpec CorpusSpec::from_json(const nlohmann::json& j) {
  CorpusSpec s;
  try {
    if (j.is_string()) {
      if (j.get<std::string>() != "default") throw invalid_spec("unknown named spec '" + j.get<std::string>() + "'");
      return default_spec();
    }
    s.levels = j.value("levels", s.levels);
    s.width = j.value("width", s.width);
    if (j.contains("height") && j["height"].get<int>() != kCorpusHeight) throw invalid_spec("levels are 14 tiles high");
    s.distractor_density = j.value("distractor_density", s.distractor_density);
    if (j.contains("patterns")) {
      const auto& p = j["patterns"];
      if (p.is_object()) {
        for (const auto& [name, count] : p.items()) s.patterns.push_back({name, count.get<int>()});
      } else {
        for (const auto& e : p) s.patterns.push_back({e.at("pattern").get<std::string>(), e.at("count").get<int>()});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw invalid_spec(std::string("malformed corpus spec: ") + e.what());
  }
  s.validate();
  return s;
}

LabelVocabulary Corpus::vocabulary() const {
  if (!labels.empty()) return LabelVocabulary(labels);
  std::vector<std::string> names;
  for (const auto& p : spec.patterns) names.push_back(p.pattern);
  return LabelVocabulary(names);
}

Corpus make_synthetic_corpus(const CorpusSpec& spec, std::uint64_t seed) {
  spec.validate();
  Corpus corpus;
  corpus.spec = spec;
  corpus.seed = seed;

  Rng rng(seed);
  std::vector<std::string> pool;
  std::set<std::string> requested;
  for (const auto& p : spec.patterns) {
    pool.insert(pool.end(), static_cast<std::size_t>(p.count), p.pattern);
    if (p.count > 0) requested.insert(p.pattern);
  }
  rng.shuffle(std::span<std::string>(pool));

  for (int li = 0; li < spec.levels; ++li) {
    Rng level_rng(Rng::derive(seed, static_cast<std::uint64_t>(li)));
    const std::string id = level_name(li);
    std::vector<Instance> instances;
    for (std::size_t i = static_cast<std::size_t>(li); i < pool.size(); i += static_cast<std::size_t>(spec.levels)) {
      instances.push_back(roll_instance(pool[i], level_rng));
    }
    // Two safe columns at each end, one clear column around every instance.
    int reserved = 0;
    for (const auto& in : instances) reserved += in.width + 2;
    const int free = spec.width - 4 - reserved;
    if (free < 0) throw invalid_spec("level " + id + " is too narrow for its " + std::to_string(instances.size()) + " pattern instances");
    std::vector<int> cuts;
    for (std::size_t i = 0; i < instances.size(); ++i) cuts.push_back(static_cast<int>(level_rng.range(0, free)));
    std::sort(cuts.begin(), cuts.end());

    LevelBuilder builder(spec.width, requested, spec.distractor_density, level_rng);
    std::vector<std::pair<int, int>> slots;
    int cursor = 2;
    int prev_cut = 0;
    for (std::size_t i = 0; i < instances.size(); ++i) {
      slots.emplace_back(cursor, cursor + cuts[i] - prev_cut);
      cursor += cuts[i] - prev_cut;
      prev_cut = cuts[i];
      auto ann = render(instances[i], cursor + 1, builder.grid(), id);
      builder.note_enemies(ann.x, ann.x + ann.w);
      corpus.annotations.push_back(ann);
      cursor += instances[i].width + 2;
    }
    slots.emplace_back(cursor, spec.width - 2);
    for (auto [a, b] : slots) builder.fill(a, b);
    builder.sky();
    corpus.levels.push_back({id, builder.grid()});
  }

  for (const auto& ann : corpus.annotations) {
    const Level* level = find_level(corpus.levels, ann.level_id);
    if (level == nullptr || !rule_holds(level->grid, ann)) {
      throw Error(ErrorKind::Runtime, "OracleViolation", "generated " + ann.label + " instance fails its rule");
    }
  }
  return corpus;
}

bool rule_holds(const LevelGrid& grid, const PatternAnnotation& a) {
  if (!a.fits(grid)) return false;
  if (a.label == "staircase") return staircase_holds(grid, a);
  if (a.label == "gap") return gap_holds(grid, a);
  if (a.label == "enemy-pair") return enemy_pair_holds(grid, a);
  if (a.label == "pipe") return pipe_holds(grid, a);
  if (a.label == "coin-arc") return coin_arc_holds(grid, a);
  if (a.label == "platform-run") return platform_run_holds(grid, a);
  return false;
}

void Corpus::save(const std::string& dir) const {
  fs::create_directories(fs::path(dir) / "levels");
  for (const auto& level : levels) write_level_file((fs::path(dir) / "levels" / (level.id + ".lvl")).string(), level.grid);
  const auto write = [&](const std::string& name, const nlohmann::json& j) {
    std::ofstream out(fs::path(dir) / name, std::ios::binary);
    out << j.dump(2) << '\n';
    if (!out) throw Error(ErrorKind::Runtime, "IoError", "cannot write " + name);
  };
  write("annotations.json", annotations_to_json(annotations));
  write("vocabulary.json", vocabulary().to_json());
  nlohmann::json meta = spec.to_json();
  meta["seed"] = seed;
  write("spec.json", meta);
}

Corpus Corpus::load(const std::string& dir) {
  const auto read = [&](const std::string& name) {
    std::ifstream in(fs::path(dir) / name, std::ios::binary);
    if (!in) throw validation_error("MissingFile", "corpus file " + name + " not found in " + dir);
    try {
      return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw validation_error("MalformedJson", name + ": " + e.what());
    }
  };
  Corpus c;
  if (fs::exists(fs::path(dir) / "spec.json")) {
    const auto meta = read("spec.json");
    c.spec = CorpusSpec::from_json(meta);
    c.seed = meta.value("seed", std::uint64_t{0});
  } else {
    c.spec.patterns.clear();
  }
  c.annotations = annotations_from_json(read("annotations.json"));
  if (fs::exists(fs::path(dir) / "vocabulary.json")) c.labels = LabelVocabulary::from_json(read("vocabulary.json")).names();
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(fs::path(dir) / "levels")) {
    if (e.path().extension() == ".lvl" || e.path().extension() == ".txt") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) c.levels.push_back({f.stem().string(), read_level_file(f.string())});
  return c;
}

}  // namespace xpcg::eval
