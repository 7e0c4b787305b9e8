#include "xpcg/service.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "xpcg/error.hpp"
#include "xpcg/hash.hpp"
#include "xpcg/rng.hpp"

namespace xpcg::service {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

Error not_found(const std::string& what) { return Error(ErrorKind::NotFound, "NotFound", what); }
Error precondition(std::string code, const std::string& what) {
  return Error(ErrorKind::Precondition, std::move(code), what);
}

void write_atomic(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error(ErrorKind::Runtime, "IoError", "cannot write " + tmp.string());
    out << text;
  }
  fs::rename(tmp, path);
}

json read_json(const fs::path& path, json fallback) {
  std::ifstream in(path);
  if (!in) return fallback;
  return json::parse(in);
}

JobState state_from(const std::string& s) {
  if (s == "queued") return JobState::Queued;
  if (s == "running") return JobState::Running;
  if (s == "done") return JobState::Done;
  return JobState::Failed;
}

template <typename T>
T field(const json& body, const char* key) {
  if (!body.is_object() || !body.contains(key)) throw validation_error("MissingField", std::string("missing '") + key + "'");
  try {
    return body.at(key).get<T>();
  } catch (const json::exception&) {
    throw validation_error("InvalidField", std::string("bad value for '") + key + "'");
  }
}

const Level& level_of(const Session& s, const std::string& id) {
  const Level* l = find_level(s.levels, id);
  if (!l) throw validation_error("UnknownLevel", "no level '" + id + "' in this session");
  return *l;
}

/// The 8x8 window a request refers to.
Chunk window_of(const Session& s, const json& body) {
  const auto& level = level_of(s, field<std::string>(body, "level"));
  const int x = field<int>(body, "x");
  const int y = field<int>(body, "y");
  if (x < 0 || y < 0 || x + kChunkSize > level.grid.width() || y + kChunkSize > level.grid.height()) {
    throw validation_error("OutOfBounds", "window outside the level");
  }
  return encode_chunk(level.grid, x, y);
}

void require_fresh(const LabelVocabulary& model_vocab, const Session& s, const char* what) {
  if (model_vocab.hash() != s.vocabulary.hash()) {
    throw precondition("StaleModel", std::string(what) + " was trained under a different vocabulary");
  }
}

const forest::ForestModel& classifier_of(const Session& s) {
  if (!s.classifier) throw precondition("NotTrained", "classifier not trained");
  require_fresh(s.classifier->vocabulary(), s, "classifier");
  return *s.classifier;
}

/// Hand labels, none corrections and sampled negatives: the classifier's
/// training set for the session's current state.
std::vector<LabeledChunk> classifier_examples(const Session& s) {
  std::vector<PatternAnnotation> hand;
  for (const auto& a : s.annotations) {
    if (a.origin == AnnotationOrigin::Hand) hand.push_back(a);
  }
  auto examples = annotations_to_examples(hand, s.levels, s.vocabulary);
  std::vector<LabeledChunk> none;
  for (const auto& w : s.none_windows) {
    const Level* l = find_level(s.levels, w.level_id);
    if (!l) continue;
    none.push_back({encode_chunk(l->grid, w.x, w.y), s.vocabulary.none_index()});
  }
  std::vector<PatternAnnotation> avoid = s.annotations;
  avoid.insert(avoid.end(), s.none_windows.begin(), s.none_windows.end());
  const auto sampled = sample_negatives(s.levels, avoid, default_negative_count(examples, s.vocabulary.size()),
                                        Rng::derive(s.seed, 1), s.vocabulary.none_index());
  examples.insert(examples.end(), none.begin(), none.end());
  examples.insert(examples.end(), sampled.examples.begin(), sampled.examples.end());
  return examples;
}

std::vector<ae::AeExample> generator_examples(const Session& s) {
  return ae::to_ae_examples(annotations_to_examples(s.annotations, s.levels, s.vocabulary), s.vocabulary.size());
}

std::vector<ae::AeExample> parent_pool(const Session& s, const ServiceConfig& c) {
  std::vector<ae::AeExample> pool;
  for (const auto& level : s.levels) {
    for (int x = 0; x + kChunkSize <= level.grid.width(); x += c.pool_stride) {
      for (int y : c.pool_rows) {
        if (y >= 0 && y + kChunkSize <= level.grid.height()) pool.push_back({encode_chunk(level.grid, x, y), std::nullopt});
      }
    }
  }
  return pool;
}

json rows_of(const LevelGrid& grid) {
  std::istringstream in(serialize_level(grid));
  json rows = json::array();
  for (std::string line; std::getline(in, line);) rows.push_back(line);
  return rows;
}

}  // namespace

const char* to_string(JobState s) {
  switch (s) {
    case JobState::Queued: return "queued";
    case JobState::Running: return "running";
    case JobState::Done: return "done";
    case JobState::Failed: return "failed";
  }
  return "failed";
}

json Job::to_json() const {
  return {{"id", id}, {"kind", kind}, {"state", to_string(state)}, {"progress", progress}, {"result", result},
          {"error", error}};
}

Job Job::from_json(const json& j) {
  Job job;
  job.id = j.at("id").get<std::string>();
  job.kind = j.at("kind").get<std::string>();
  job.state = state_from(j.at("state").get<std::string>());
  job.progress = j.value("progress", json::object());
  job.result = j.value("result", json());
  job.error = j.value("error", json());
  return job;
}

Service::Service(ServiceConfig config) : config_(std::move(config)) {
  if (config_.max_parallel_jobs < 1) throw validation_error("InvalidConfig", "max_parallel_jobs must be >= 1");
  config_.autoencoder.validate();
  fs::create_directories(fs::path(config_.data_dir) / "sessions");
  load_sessions();
  for (int i = 0; i < config_.max_parallel_jobs; ++i) workers_.emplace_back([this] { worker(); });
}

Service::~Service() {
  {
    std::lock_guard lock(queue_mutex_);
    stopping_ = true;
  }
  queue_cv_.notify_all();
  for (auto& t : workers_) t.join();
}

std::string Service::session_dir(const std::string& sid) const {
  return (fs::path(config_.data_dir) / "sessions" / sid).string();
}

std::shared_ptr<Session> Service::session(const std::string& sid) {
  std::lock_guard lock(sessions_mutex_);
  auto it = sessions_.find(sid);
  if (it == sessions_.end()) throw not_found("no session '" + sid + "'");
  return it->second;
}

void Service::persist(Session& s) {
  const fs::path dir = session_dir(s.id);
  json jobs = json::array();
  for (const auto& [id, job] : s.jobs) jobs.push_back(job.to_json());
  json meta = {{"id", s.id},
               {"seed", s.seed},
               {"next_job", s.next_job},
               {"levels", json::array()},
               {"generator", {{"mode", s.generator_info.mode},
                              {"epochs", s.generator_info.epochs},
                              {"seconds", s.generator_info.seconds}}}};
  for (const auto& level : s.levels) {
    meta["levels"].push_back(level.id);
    const fs::path path = dir / "levels" / (level.id + ".lvl");
    if (!fs::exists(path)) write_atomic(path, serialize_level(level.grid));
  }
  fs::create_directories(dir / "models");
  write_atomic(dir / "session.json", meta.dump(2));
  write_atomic(dir / "vocabulary.json", s.vocabulary.to_json().dump(2));
  write_atomic(dir / "annotations.json", annotations_to_json(s.annotations).dump(2));
  write_atomic(dir / "none_windows.json", annotations_to_json(s.none_windows).dump(2));
  write_atomic(dir / "jobs.json", jobs.dump(2));
}

void Service::load_sessions() {
  const fs::path root = fs::path(config_.data_dir) / "sessions";
  for (const auto& entry : fs::directory_iterator(root)) {
    if (!entry.is_directory() || !fs::exists(entry.path() / "session.json")) continue;
    auto s = std::make_shared<Session>();
    const auto meta = read_json(entry.path() / "session.json", json::object());
    s->id = meta.at("id").get<std::string>();
    s->seed = meta.at("seed").get<std::uint64_t>();
    s->next_job = meta.at("next_job").get<int>();
    for (const auto& lid : meta.at("levels")) {
      const auto id = lid.get<std::string>();
      s->levels.push_back({id, read_level_file((entry.path() / "levels" / (id + ".lvl")).string())});
    }
    s->vocabulary = LabelVocabulary::from_json(read_json(entry.path() / "vocabulary.json", json::array()));
    s->annotations = annotations_from_json(read_json(entry.path() / "annotations.json", json::array()));
    s->none_windows = annotations_from_json(read_json(entry.path() / "none_windows.json", json::array()));
    const auto& g = meta.at("generator");
    s->generator_info = {g.at("mode").get<std::string>(), g.at("epochs").get<int>(), g.at("seconds").get<double>()};

    const fs::path models = entry.path() / "models";
    if (fs::exists(models / "classifier.json")) {
      s->classifier = std::make_shared<forest::ForestModel>(forest::ForestModel::load((models / "classifier.json").string()));
    }
    if (fs::exists(models / "parent.json")) {
      s->parent = std::make_shared<ae::AutoencoderModel>(ae::AutoencoderModel::load((models / "parent").string()));
    }
    if (fs::exists(models / "generator.json")) {
      s->generator = std::make_shared<ae::AutoencoderModel>(ae::AutoencoderModel::load((models / "generator").string()));
    }
    // Jobs cut off by the restart never resume.
    for (const auto& j : read_json(entry.path() / "jobs.json", json::array())) {
      auto job = Job::from_json(j);
      if (job.state == JobState::Queued || job.state == JobState::Running) {
        job.state = JobState::Failed;
        job.error = {{"code", "Interrupted"}, {"message", "service restarted before the job finished"}};
      }
      s->jobs[job.id] = job;
    }
    persist(*s);
    const auto n = std::strtoull(s->id.c_str() + 1, nullptr, 10);
    session_counter_ = std::max<std::uint64_t>(session_counter_, n);
    sessions_[s->id] = s;
  }
}

json Service::create_session(const json& body) {
  auto s = std::make_shared<Session>();
  s->seed = body.is_object() ? body.value("seed", std::uint64_t{0}) : 0;
  {
    std::lock_guard lock(sessions_mutex_);
    char buf[32];
    std::snprintf(buf, sizeof buf, "s%06llu", static_cast<unsigned long long>(++session_counter_));
    s->id = buf;
    sessions_[s->id] = s;
  }
  std::lock_guard lock(s->mutex);
  persist(*s);
  return {{"id", s->id}, {"seed", s->seed}};
}

json Service::get_session(const std::string& sid) {
  auto s = session(sid);
  std::lock_guard lock(s->mutex);
  json levels = json::array();
  for (const auto& l : s->levels) levels.push_back({{"id", l.id}, {"width", l.grid.width()}, {"height", l.grid.height()}});
  json jobs = json::array();
  for (const auto& [id, job] : s->jobs) jobs.push_back(job.to_json());
  return {{"id", s->id}, {"seed", s->seed}, {"levels", levels}, {"vocabulary", s->vocabulary.names()},
          {"annotations", s->annotations.size()}, {"jobs", jobs}};
}

json Service::upload_level(const std::string& sid, const json& body) {
  std::string text;
  if (body.is_object() && body.contains("rows")) {
    for (const auto& r : field<std::vector<std::string>>(body, "rows")) text += r + "\n";
  } else {
    text = field<std::string>(body, "text");
  }
  auto grid = parse_level(text);
  const auto canonical = serialize_level(grid);
  const auto id = "lvl-" + hex64(fnv1a64(canonical)).substr(0, 12);

  auto s = session(sid);
  std::lock_guard lock(s->mutex);
  const bool existing = find_level(s->levels, id) != nullptr;
  if (!existing) {
    s->levels.push_back({id, std::move(grid)});
    persist(*s);
  }
  const auto& level = *find_level(s->levels, id);
  return {{"id", id}, {"width", level.grid.width()}, {"height", level.grid.height()}, {"deduplicated", existing}};
}

json Service::get_level(const std::string& sid, const std::string& level_id) {
  auto s = session(sid);
  std::lock_guard lock(s->mutex);
  const Level* l = find_level(s->levels, level_id);
  if (!l) throw not_found("no level '" + level_id + "'");
  return {{"id", l->id}, {"width", l->grid.width()}, {"height", l->grid.height()}, {"rows", rows_of(l->grid)}};
}

json Service::put_vocabulary(const std::string& sid, const json& body) {
  const json names = body.is_array() ? body : (body.is_object() && body.contains("names") ? body["names"] : json());
  if (!names.is_array()) throw validation_error("InvalidVocabulary", "expected a list of names");
  LabelVocabulary vocab;
  try {
    vocab = LabelVocabulary::from_json(names);
  } catch (const json::exception& e) {
    throw validation_error("InvalidVocabulary", e.what());
  }
  auto s = session(sid);
  std::lock_guard lock(s->mutex);
  for (const auto& a : s->annotations) {
    if (!vocab.find(a.label)) {
      throw Error(ErrorKind::Conflict, "VocabularyConflict", "label '" + a.label + "' is still used by annotations");
    }
  }
  s->vocabulary = std::move(vocab);
  persist(*s);
  return {{"names", s->vocabulary.names()}, {"hash", hex64(s->vocabulary.hash())}};
}

json Service::get_vocabulary(const std::string& sid) {
  auto s = session(sid);
  std::lock_guard lock(s->mutex);
  return {{"names", s->vocabulary.names()}, {"hash", hex64(s->vocabulary.hash())}};
}

json Service::post_annotations(const std::string& sid, const json& body) {
  const json list = body.is_array() ? body : (body.is_object() && body.contains("annotations") ? body["annotations"] : json::array({body}));
  auto incoming = annotations_from_json(list);
  auto s = session(sid);
  std::lock_guard lock(s->mutex);
  for (const auto& a : incoming) {
    const auto& level = level_of(*s, a.level_id);
    if (!a.fits(level.grid)) throw validation_error("OutOfBounds", "annotation outside level '" + a.level_id + "'");
    if (!s->vocabulary.find(a.label)) throw validation_error("UnknownLabel", "label '" + a.label + "' is not in the vocabulary");
  }
  for (auto& a : incoming) {
    // Accepting an auto label re-posts it as hand; drop the auto copy.
    if (a.origin == AnnotationOrigin::Hand) {
      std::erase_if(s->annotations, [&](const PatternAnnotation& o) {
        return o.origin == AnnotationOrigin::Auto && o.level_id == a.level_id && o.x == a.x && o.y == a.y &&
               o.w == a.w && o.h == a.h && o.label == a.label;
      });
    }
    s->annotations.push_back(std::move(a));
  }
  persist(*s);
  return {{"added", incoming.size()}, {"total", s->annotations.size()}};
}

json Service::get_annotations(const std::string& sid) {
  auto s = session(sid);
  std::lock_guard lock(s->mutex);
  return {{"annotations", annotations_to_json(s->annotations)}, {"none_windows", annotations_to_json(s->none_windows)}};
}

json Service::submit(const std::shared_ptr<Session>& s, const std::string& kind, Work work) {
  if (!s->active_job.empty()) {
    throw Error(ErrorKind::Conflict, "JobConflict", "job " + s->active_job + " is still " +
                                                        to_string(s->jobs.at(s->active_job).state));
  }
  Job job;
  job.id = "j" + std::to_string(s->next_job++);
  job.kind = kind;
  s->jobs[job.id] = job;
  s->active_job = job.id;
  persist(*s);

  const std::string jid = job.id;
  auto task = [this, s, jid, work = std::move(work)]() {
    {
      std::lock_guard lock(s->mutex);
      s->jobs.at(jid).state = JobState::Running;
      persist(*s);
    }
    json result;
    json error;
    try {
      Job view;
      view.id = jid;
      result = work(view, s);
    } catch (const Error& e) {
      error = {{"code", e.code()}, {"message", e.what()}};
    } catch (const std::exception& e) {
      error = {{"code", "InternalError"}, {"message", e.what()}};
    }
    {
      std::lock_guard lock(s->mutex);
      auto& j = s->jobs.at(jid);
      if (error.is_null()) {
        j.state = JobState::Done;
        j.result = result;
      } else {
        j.state = JobState::Failed;
        j.error = error;
      }
      s->active_job.clear();
      persist(*s);
    }
    done_cv_.notify_all();
  };
  {
    std::lock_guard lock(queue_mutex_);
    queue_.push_back(std::move(task));
  }
  queue_cv_.notify_one();
  return {{"job", job.to_json()}};
}

void Service::set_progress(Session& s, const std::string& job_id, json progress) {
  std::lock_guard lock(s.mutex);
  s.jobs.at(job_id).progress = std::move(progress);
}

void Service::worker() {
  for (;;) {
    std::function<void()> task;
    {
      std::unique_lock lock(queue_mutex_);
      queue_cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
      if (queue_.empty()) return;
      task = std::move(queue_.front());
      queue_.pop_front();
    }
    task();
  }
}

json Service::train_classifier(const std::string& sid) {
  auto s = session(sid);
  std::lock_guard lock(s->mutex);
  if (s->vocabulary.size() == 0) throw validation_error("InsufficientData", "vocabulary is empty");
  auto examples = classifier_examples(*s);
  auto vocab = s->vocabulary;
  auto fc = config_.forest;
  fc.seed = Rng::derive(s->seed, 2);
  return submit(s, "classifier", [this, examples = std::move(examples), vocab, fc](Job& job, std::shared_ptr<Session> s) {
    set_progress(*s, job.id, {{"examples", examples.size()}});
    auto model = std::make_shared<forest::ForestModel>(forest::fit(examples, vocab, fc));
    const double acc = forest::training_accuracy(*model, examples);
    std::lock_guard lock(s->mutex);
    if (s->vocabulary.hash() != vocab.hash()) throw precondition("StaleModel", "vocabulary changed during training");
    model->save((fs::path(session_dir(s->id)) / "models" / "classifier.json").string());
    s->classifier = model;
    s->jobs.at(job.id).progress = {{"examples", examples.size()}, {"trees", model->trees().size()}};
    return json{{"trees", model->trees().size()}, {"examples", examples.size()}, {"training_accuracy", acc},
                {"generation", model->generation()}};
  });
}

json Service::feedback(const std::string& sid, const json& body) {
  auto s = session(sid);
  std::lock_guard lock(s->mutex);
  classifier_of(*s);
  const auto label_name = field<std::string>(body, "label");
  int label = s->vocabulary.none_index();
  if (label_name != "none") label = s->vocabulary.index_of(label_name);
  PatternAnnotation window{field<std::string>(body, "level"), field<int>(body, "x"), field<int>(body, "y"),
                           kChunkSize, kChunkSize, label_name, AnnotationOrigin::Hand};
  const LabeledChunk corrected{window_of(*s, body), label};
  auto all = classifier_examples(*s);
  auto current = s->classifier;
  const double fraction = config_.forest.max_replace_fraction;
  return submit(s, "feedback", [this, corrected, all = std::move(all), current, window, fraction](Job&,
                                                                                                 std::shared_ptr<Session> s) {
    const int before = current->predict(corrected.chunk).label_index;
    auto update = forest::incremental_update(*current, {corrected}, all, fraction);
    const int after = update.model.predict(corrected.chunk).label_index;
    std::lock_guard lock(s->mutex);
    if (s->vocabulary.hash() != current->vocabulary().hash()) {
      throw precondition("StaleModel", "vocabulary changed during retraining");
    }
    // The correction becomes a hand label; auto labels that disagree go.
    std::erase_if(s->annotations, [&](const PatternAnnotation& a) {
      return a.origin == AnnotationOrigin::Auto && a.level_id == window.level_id &&
             a.overlaps(window.x, window.y, window.w, window.h) && a.label != window.label;
    });
    if (window.label == "none") {
      s->none_windows.push_back(window);
    } else {
      s->annotations.push_back(window);
    }
    if (!update.unchanged) {
      auto model = std::make_shared<forest::ForestModel>(std::move(update.model));
      model->save((fs::path(session_dir(s->id)) / "models" / "classifier.json").string());
      s->classifier = model;
    }
    persist(*s);
    const auto& vocab = current->vocabulary();
    return json{{"unchanged", update.unchanged},
                {"replaced", update.replaced},
                {"forest_size", s->classifier->trees().size()},
                {"before", vocab.name_of(before)},
                {"after", vocab.name_of(after)},
                {"generation", s->classifier->generation()}};
  });
}

json Service::autolabel(const std::string& sid, const json& body) {
  auto s = session(sid);
  std::lock_guard lock(s->mutex);
  classifier_of(*s);
  const int stride = body.is_object() ? body.value("stride", config_.autolabel_stride) : config_.autolabel_stride;
  if (stride < 1) throw validation_error("InvalidStride", "stride must be >= 1");
  auto model = s->classifier;
  auto levels = s->levels;
  return submit(s, "autolabel", [model, levels = std::move(levels), stride, this](Job& job, std::shared_ptr<Session> s) {
    set_progress(*s, job.id, {{"levels", levels.size()}});
    auto found = forest::autolabel(*model, levels, stride);
    std::lock_guard lock(s->mutex);
    if (s->vocabulary.hash() != model->vocabulary().hash()) throw precondition("StaleModel", "vocabulary changed");
    std::erase_if(s->annotations, [](const PatternAnnotation& a) { return a.origin == AnnotationOrigin::Auto; });
    std::map<std::string, int> by_label;
    int added = 0;
    for (auto& a : found) {
      const bool duplicate = std::any_of(s->annotations.begin(), s->annotations.end(), [&](const PatternAnnotation& h) {
        return h.level_id == a.level_id && h.label == a.label && h.overlaps(a.x, a.y, a.w, a.h);
      });
      const bool vetoed = std::any_of(s->none_windows.begin(), s->none_windows.end(), [&](const PatternAnnotation& n) {
        return n.level_id == a.level_id && n.overlaps(a.x, a.y, a.w, a.h);
      });
      if (duplicate || vetoed) continue;
      ++by_label[a.label];
      ++added;
      s->annotations.push_back(std::move(a));
    }
    persist(*s);
    return json{{"annotations", added}, {"by_label", by_label}};
  });
}

json Service::train_generator(const std::string& sid, const std::string& mode) {
  if (mode != "full" && mode != "transfer") throw validation_error("InvalidMode", "mode must be full or transfer");
  auto s = session(sid);
  std::lock_guard lock(s->mutex);
  if (s->vocabulary.size() == 0) throw validation_error("InsufficientData", "vocabulary is empty");
  auto data = generator_examples(*s);
  if (data.empty()) throw validation_error("InsufficientData", "no labeled chunks to train on");
  auto vocab = s->vocabulary;
  auto cfg = config_.autoencoder;
  cfg.seed = Rng::derive(s->seed, 3);
  cfg.n_labels = vocab.size();
  std::vector<ae::AeExample> pool;
  std::shared_ptr<const ae::AutoencoderModel> parent = s->parent;
  if (mode == "transfer" && !parent) pool = parent_pool(*s, config_);

  return submit(s, "generator-" + mode, [this, mode, data = std::move(data), vocab, cfg, pool = std::move(pool),
                                         parent](Job& job, std::shared_ptr<Session> s) mutable {
    const auto t0 = std::chrono::steady_clock::now();
    const auto progress = [&](const char* phase) {
      ae::TrainOptions o;
      o.on_epoch = [&, phase](int epoch, double loss) {
        set_progress(*s, job.id, {{"phase", phase}, {"epoch", epoch}, {"loss", loss}});
        return true;
      };
      return o;
    };
    int parent_epochs = 0;
    std::shared_ptr<ae::AutoencoderModel> trained_parent;
    if (mode == "transfer" && !parent) {
      auto pc = cfg;
      pc.n_labels = 0;
      pc.seed = Rng::derive(cfg.seed, 1);
      trained_parent = std::make_shared<ae::AutoencoderModel>(ae::build(pc));
      parent_epochs = ae::train(*trained_parent, pool, progress("parent")).epochs;
      parent = trained_parent;
    }
    const auto t1 = std::chrono::steady_clock::now();
    auto model = std::make_shared<ae::AutoencoderModel>(mode == "full" ? ae::build(cfg, vocab)
                                                                       : ae::transfer(*parent, cfg, vocab));
    const auto summary = ae::train(*model, data, progress(mode == "full" ? "full" : "transfer"));
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count();

    std::lock_guard lock(s->mutex);
    if (s->vocabulary.hash() != vocab.hash()) throw precondition("StaleModel", "vocabulary changed during training");
    const fs::path models = fs::path(session_dir(s->id)) / "models";
    fs::create_directories(models);
    if (trained_parent) {
      trained_parent->save((models / "parent").string());
      s->parent = trained_parent;
    }
    model->save((models / "generator").string());
    s->generator = model;
    s->generator_info = {mode, summary.epochs, seconds};
    persist(*s);
    return json{{"mode", mode},
                {"epochs", summary.epochs},
                {"converged", summary.converged},
                {"final_loss", summary.final_loss},
                {"parent_epochs", parent_epochs},
                {"examples", data.size()},
                {"model", model->id()},
                {"seconds", seconds},
                {"total_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}};
  });
}

json Service::generate(const std::string& sid, const json& body) {
  auto s = session(sid);
  std::shared_ptr<const ae::AutoencoderModel> model;
  Chunk context;
  int label = 0;
  double threshold = 0.5;
  {
    std::lock_guard lock(s->mutex);
    if (!s->generator) throw precondition("NotTrained", "generator not trained");
    require_fresh(s->generator->vocabulary(), *s, "generator");
    model = s->generator;
    if (body.is_object() && body.contains("context")) {
      const auto rows = field<std::vector<std::string>>(body, "context");
      std::string text;
      for (const auto& r : rows) text += r + "\n";
      const auto grid = parse_level(text);
      if (grid.width() != kChunkSize || grid.height() != kChunkSize) {
        throw validation_error("InvalidContext", "context must be 8x8");
      }
      context = Chunk::from_grid(grid);
    } else {
      context = window_of(*s, body);
    }
    label = model->vocabulary().index_of(field<std::string>(body, "label"));
    threshold = body.value("threshold", 0.5);
    if (!(threshold > 0.0 && threshold < 1.0)) throw validation_error("InvalidThreshold", "threshold must lie in (0, 1)");
  }
  const auto g = ae::generate(*model, context, label, threshold);
  json labels = json::array();
  for (const auto& p : g.predicted_labels) labels.push_back({{"name", p.name}, {"strength", p.strength}});
  return {{"tiles", rows_of(g.grid)}, {"predicted_labels", labels}, {"label_head", g.label_head}, {"model", model->id()}};
}

json Service::predict(const std::string& sid, const json& body) {
  auto s = session(sid);
  std::shared_ptr<const forest::ForestModel> model;
  Chunk chunk;
  {
    std::lock_guard lock(s->mutex);
    classifier_of(*s);
    model = s->classifier;
    chunk = window_of(*s, body);
  }
  const auto p = model->predict(chunk);
  return {{"label", model->vocabulary().name_of(p.label_index)}, {"votes", p.votes}};
}

json Service::get_job(const std::string& sid, const std::string& job_id) {
  auto s = session(sid);
  std::lock_guard lock(s->mutex);
  auto it = s->jobs.find(job_id);
  if (it == s->jobs.end()) throw not_found("no job '" + job_id + "'");
  return it->second.to_json();
}

json Service::wait_job(const std::string& sid, const std::string& job_id) {
  auto s = session(sid);
  for (;;) {
    {
      std::lock_guard lock(s->mutex);
      auto it = s->jobs.find(job_id);
      if (it == s->jobs.end()) throw not_found("no job '" + job_id + "'");
      if (it->second.state == JobState::Done || it->second.state == JobState::Failed) return it->second.to_json();
    }
    std::unique_lock lock(queue_mutex_);
    done_cv_.wait_for(lock, std::chrono::milliseconds(50));
  }
}

json Service::metrics(const std::string& sid) {
  auto s = session(sid);
  std::lock_guard lock(s->mutex);
  int hand = 0;
  int autos = 0;
  for (const auto& a : s->annotations) (a.origin == AnnotationOrigin::Hand ? hand : autos)++;
  std::map<std::string, int> jobs;
  for (const auto& [id, job] : s->jobs) ++jobs[to_string(job.state)];
  json classifier = {{"trained", s->classifier != nullptr}};
  if (s->classifier) {
    classifier["trees"] = s->classifier->trees().size();
    classifier["generation"] = s->classifier->generation();
    classifier["stale"] = s->classifier->vocabulary().hash() != s->vocabulary.hash();
  }
  json generator = {{"trained", s->generator != nullptr}, {"parent_trained", s->parent != nullptr}};
  if (s->generator) {
    generator["mode"] = s->generator_info.mode;
    generator["epochs"] = s->generator_info.epochs;
    generator["seconds"] = s->generator_info.seconds;
    generator["final_loss"] = s->generator->final_loss();
    generator["provenance"] = s->generator->provenance().kind;
    generator["stale"] = s->generator->vocabulary().hash() != s->vocabulary.hash();
  }
  if (s->parent) generator["parent_epochs"] = s->parent->epochs();
  return {{"session", s->id},
          {"levels", s->levels.size()},
          {"vocabulary", s->vocabulary.size()},
          {"vocabulary_hash", hex64(s->vocabulary.hash())},
          {"annotations", {{"hand", hand}, {"auto", autos}, {"none", s->none_windows.size()}}},
          {"classifier", classifier},
          {"generator", generator},
          {"jobs", jobs}};
}

}  // namespace xpcg::service
