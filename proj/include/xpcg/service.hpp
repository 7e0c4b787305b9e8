#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "xpcg/autoencoder.hpp"
#include "xpcg/forest.hpp"
#include "xpcg/labels.hpp"

namespace xpcg::service {

struct ServiceConfig {
  std::string data_dir = "data";
  int max_parallel_jobs = 1;
  forest::ForestConfig forest;
  ae::AeConfig autoencoder;  // n_labels and seed are set per session
  int autolabel_stride = 2;
  int pool_stride = 8;  // no-labels parent: x stride over every level
  std::vector<int> pool_rows = {0, 3, 6};
};

enum class JobState { Queued, Running, Done, Failed };
const char* to_string(JobState s);

struct Job {
  std::string id;
  std::string kind;  // classifier | feedback | autolabel | generator-full | generator-transfer
  JobState state = JobState::Queued;
  nlohmann::json progress = nlohmann::json::object();
  nlohmann::json result;  // null until done
  nlohmann::json error;   // {code, message} when failed

  nlohmann::json to_json() const;
  static Job from_json(const nlohmann::json& j);
};

struct GeneratorInfo {
  std::string mode;  // full | transfer
  int epochs = 0;
  double seconds = 0.0;
};

/// Mutable state of one designer session. Guarded by `mutex`; models are
/// immutable once installed and handed out as shared pointers, so readers
/// never wait for training.
struct Session {
  std::string id;
  std::uint64_t seed = 0;
  std::vector<Level> levels;
  LabelVocabulary vocabulary;
  std::vector<PatternAnnotation> annotations;  // hand and auto
  std::vector<PatternAnnotation> none_windows;  // feedback marking a window as none
  std::shared_ptr<const forest::ForestModel> classifier;
  std::shared_ptr<const ae::AutoencoderModel> parent;
  std::shared_ptr<const ae::AutoencoderModel> generator;
  GeneratorInfo generator_info;
  std::map<std::string, Job> jobs;
  std::string active_job;  // id of the queued/running job, empty when idle
  int next_job = 1;
  std::mutex mutex;
};

/// Engine behind the REST API. Every method takes and returns JSON and throws
/// xpcg::Error; the HTTP layer maps error kinds to status codes.
class Service {
 public:
  explicit Service(ServiceConfig config);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  const ServiceConfig& config() const { return config_; }

  nlohmann::json create_session(const nlohmann::json& body);
  nlohmann::json get_session(const std::string& sid);
  nlohmann::json upload_level(const std::string& sid, const nlohmann::json& body);
  nlohmann::json get_level(const std::string& sid, const std::string& level_id);
  nlohmann::json put_vocabulary(const std::string& sid, const nlohmann::json& body);
  nlohmann::json get_vocabulary(const std::string& sid);
  nlohmann::json post_annotations(const std::string& sid, const nlohmann::json& body);
  nlohmann::json get_annotations(const std::string& sid);

  nlohmann::json train_classifier(const std::string& sid);
  nlohmann::json feedback(const std::string& sid, const nlohmann::json& body);
  nlohmann::json autolabel(const std::string& sid, const nlohmann::json& body);
  nlohmann::json train_generator(const std::string& sid, const std::string& mode);
  nlohmann::json generate(const std::string& sid, const nlohmann::json& body);
  nlohmann::json predict(const std::string& sid, const nlohmann::json& body);

  nlohmann::json get_job(const std::string& sid, const std::string& job_id);
  nlohmann::json metrics(const std::string& sid);

  /// Blocks until the job leaves queued/running. Test and CLI helper.
  nlohmann::json wait_job(const std::string& sid, const std::string& job_id);

 private:
  std::shared_ptr<Session> session(const std::string& sid);
  void load_sessions();
  void persist(Session& s);  // callers hold s.mutex
  std::string session_dir(const std::string& sid) const;

  using Work = std::function<nlohmann::json(Job& progress_view, std::shared_ptr<Session>)>;
  /// Registers a job (409 when one is active) and queues `work`. Called with
  /// s->mutex held. `work` runs without the lock and returns the result.
  nlohmann::json submit(const std::shared_ptr<Session>& s, const std::string& kind, Work work);
  void set_progress(Session& s, const std::string& job_id, nlohmann::json progress);
  void worker();

  ServiceConfig config_;
  std::mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t session_counter_ = 0;

  std::mutex queue_mutex_;
  std::condition_variable queue_cv_;
  std::condition_variable done_cv_;
  std::deque<std::function<void()>> queue_;
  std::vector<std::thread> workers_;
  std::atomic<bool> stopping_{false};
};

}  // namespace xpcg::service
