#include "textmania/encoder.hpp"

#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "textmania/errors.hpp"
#include "textmania/rng.hpp"

namespace textmania {

using nlohmann::json;

std::string pooling_name(Pooling p) {
  switch (p) {
    case Pooling::kNativeSentence: return "native_sentence";
    case Pooling::kMeanTokens: return "mean_tokens";
    case Pooling::kSumTokens: return "sum_tokens";
  }
  throw ConfigError("invalid pooling value");
}

Pooling pooling_from_name(const std::string& name) {
  if (name == "native_sentence") return Pooling::kNativeSentence;
  if (name == "mean_tokens") return Pooling::kMeanTokens;
  if (name == "sum_tokens") return Pooling::kSumTokens;
  throw ConfigError("unknown pooling '" + name + "'");
}

Eigen::VectorXd EncoderBackend::embed_precise(const std::string& text) const {
  return embed(text).cast<double>();
}

TextEmbedding embed_text(const EncoderBackend& backend,
                         const std::string& text) {
  if (text.empty()) {
    throw InputError("cannot embed empty text");
  }
  Eigen::VectorXf v = backend.embed(text);
  if (v.size() != backend.dim()) {
    throw BackendError("backend '" + backend.id() + "' emitted dim " +
                       std::to_string(v.size()) + ", declared " +
                       std::to_string(backend.dim()));
  }
  if (!v.allFinite()) {
    throw BackendError("backend '" + backend.id() +
                       "' emitted non-finite values for: " + text);
  }
  return {std::move(v), backend.id(), text};
}

Eigen::VectorXf toy_token_vector(const std::string& token, int dim,
                                 uint64_t seed) {
  if (dim < 2) {
    throw ConfigError("toy token vectors need dim >= 2, got " +
                      std::to_string(dim));
  }
  if (token.empty()) {
    throw InputError("cannot derive a vector for an empty token");
  }
  Rng rng = derive_rng(seed, fnv1a64(token));
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v[i] = draw_normal(rng);
  v /= v.norm();
  return v.cast<float>();
}

ToyHashEncoder::ToyHashEncoder(int dim, uint64_t seed, std::string id)
    : id_(std::move(id)), dim_(dim), seed_(seed) {
  if (dim < 2) {
    throw ConfigError("toy encoder needs dim >= 2, got " +
                      std::to_string(dim));
  }
}

Eigen::VectorXd ToyHashEncoder::embed_precise(const std::string& text) const {
  std::istringstream iss(text);
  std::string token;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(dim_);
  bool any = false;
  while (iss >> token) {
    sum += toy_token_vector(token, dim_, seed_).cast<double>();
    any = true;
  }
  if (!any) {
    throw InputError("cannot embed empty text");
  }
  return sum;
}

Eigen::VectorXf ToyHashEncoder::embed(const std::string& text) const {
  return embed_precise(text).cast<float>();
}

// ---------------------------------------------------------------------------
// Out-of-process adapter
// ---------------------------------------------------------------------------

namespace {

class ProcessEncoder : public EncoderBackend {
 public:
  ProcessEncoder(std::string id, int dim, Pooling pooling,
                 std::vector<std::string> command)
      : id_(std::move(id)),
        dim_(dim),
        pooling_(pooling),
        command_(std::move(command)) {
    if (command_.empty()) {
      throw ConfigError("adapter '" + id_ + "' has an empty command");
    }
  }

  ~ProcessEncoder() override { shutdown(); }

  const std::string& id() const override { return id_; }
  int dim() const override { return dim_; }
  Pooling pooling() const override { return pooling_; }

  Eigen::VectorXf embed(const std::string& text) const override {
    std::lock_guard<std::mutex> lock(mutex_);
    ensure_started();
    json req;
    req["text"] = text;
    send_line(req.dump());
    json resp = parse_response(recv_line());
    if (resp.contains("error")) {
      throw InputError("adapter '" + id_ +
                       "' rejected input: " + resp["error"].get<std::string>());
    }
    const auto& arr = resp.at("vector");
    if (!arr.is_array() || static_cast<int>(arr.size()) != dim_) {
      throw BackendError("adapter '" + id_ + "' returned " +
                         std::to_string(arr.size()) + " values, expected " +
                         std::to_string(dim_));
    }
    Eigen::VectorXf v(dim_);
    for (int i = 0; i < dim_; ++i) v[i] = arr[i].get<float>();
    return v;
  }

 private:
  void ensure_started() const {
    if (pid_ > 0) return;
    int to_child[2];
    int from_child[2];
    if (pipe(to_child) != 0 || pipe(from_child) != 0) {
      throw BackendError("adapter '" + id_ + "': pipe() failed");
    }
    pid_t pid = fork();
    if (pid < 0) {
      throw BackendError("adapter '" + id_ + "': fork() failed");
    }
    if (pid == 0) {
      dup2(to_child[0], STDIN_FILENO);
      dup2(from_child[1], STDOUT_FILENO);
      close(to_child[0]);
      close(to_child[1]);
      close(from_child[0]);
      close(from_child[1]);
      if (const char* cache = std::getenv("TEXTMANIA_MODEL_CACHE")) {
        setenv("HF_HOME", cache, 1);
        setenv("TRANSFORMERS_CACHE", cache, 1);
      }
      std::vector<char*> argv;
      argv.reserve(command_.size() + 1);
      for (const auto& a : command_) argv.push_back(const_cast<char*>(a.c_str()));
      argv.push_back(nullptr);
      execvp(argv[0], argv.data());
      std::perror("textmania adapter exec");
      _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);
    pid_ = pid;
    write_fd_ = to_child[1];
    read_fd_ = from_child[0];

    // Handshake: the adapter announces its identity before serving.
    json hello = parse_response(recv_line());
    if (hello.value("dim", -1) != dim_) {
      int got = hello.value("dim", -1);
      shutdown();
      throw BackendError("adapter '" + id_ + "' announced dim " +
                         std::to_string(got) + ", manifest says " +
                         std::to_string(dim_));
    }
  }

  json parse_response(const std::string& line) const {
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      throw BackendError("adapter '" + id_ +
                         "' sent malformed JSON: " + line.substr(0, 200));
    }
    return j;
  }

  void send_line(const std::string& s) const {
    std::string line = s + "\n";
    size_t off = 0;
    while (off < line.size()) {
      ssize_t n = write(write_fd_, line.data() + off, line.size() - off);
      if (n <= 0) {
        throw BackendError("adapter '" + id_ + "' closed its input");
      }
      off += static_cast<size_t>(n);
    }
  }

  std::string recv_line() const {
    std::string line;
    char c;
    for (;;) {
      ssize_t n = read(read_fd_, &c, 1);
      if (n <= 0) {
        throw BackendError("adapter '" + id_ +
                           "' exited before answering (model load failure?)");
      }
      if (c == '\n') return line;
      line.push_back(c);
    }
  }

  void shutdown() const {
    if (pid_ > 0) {
      close(write_fd_);
      close(read_fd_);
      int status = 0;
      waitpid(pid_, &status, 0);
      pid_ = -1;
    }
  }

  std::string id_;
  int dim_;
  Pooling pooling_;
  std::vector<std::string> command_;
  mutable std::mutex mutex_;
  mutable pid_t pid_ = -1;
  mutable int write_fd_ = -1;
  mutable int read_fd_ = -1;
};

}  // namespace

std::shared_ptr<EncoderBackend> make_process_encoder(
    const std::string& id, int dim, Pooling pooling,
    std::vector<std::string> command) {
  return std::make_shared<ProcessEncoder>(id, dim, pooling,
                                          std::move(command));
}

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

EncoderRegistry::EncoderRegistry() {
  register_factory("toy-hash",
                   [] { return std::make_shared<ToyHashEncoder>(64, 0); });
}

EncoderRegistry& EncoderRegistry::global() {
  static EncoderRegistry registry;
  static std::once_flag env_once;
  std::call_once(env_once, [] { registry.load_adapters_from_env(); });
  return registry;
}

void EncoderRegistry::register_backend(
    std::shared_ptr<EncoderBackend> backend) {
  std::lock_guard<std::mutex> lock(mutex_);
  for (auto& [id, b] : backends_) {
    if (id == backend->id()) return;  // idempotent
  }
  backends_.emplace_back(backend->id(), std::move(backend));
}

void EncoderRegistry::register_factory(
    const std::string& id,
    std::function<std::shared_ptr<EncoderBackend>()> factory) {
  std::lock_guard<std::mutex> lock(mutex_);
  for (auto& [fid, f] : factories_) {
    if (fid == id) return;
  }
  factories_.emplace_back(id, std::move(factory));
}

std::shared_ptr<EncoderBackend> EncoderRegistry::get(const std::string& id) {
  {
    std::lock_guard<std::mutex> lock(mutex_);
    for (auto& [bid, b] : backends_) {
      if (bid == id) return b;
    }
  }
  std::function<std::shared_ptr<EncoderBackend>()> factory;
  {
    std::lock_guard<std::mutex> lock(mutex_);
    for (auto& [fid, f] : factories_) {
      if (fid == id) {
        factory = f;
        break;
      }
    }
  }
  if (!factory && id.rfind("toy-hash:", 0) == 0) {
    // "toy-hash:<dim>[:<seed>]"
    std::string rest = id.substr(9);
    size_t colon = rest.find(':');
    int dim = 0;
    uint64_t seed = 0;
    try {
      dim = std::stoi(rest.substr(0, colon));
      if (colon != std::string::npos) seed = std::stoull(rest.substr(colon + 1));
    } catch (const std::exception&) {
      throw BackendError("malformed toy backend id '" + id + "'");
    }
    factory = [id, dim, seed] {
      return std::make_shared<ToyHashEncoder>(dim, seed, id);
    };
  }
  if (!factory) {
    throw BackendError("no backend registered under id '" + id + "'");
  }
  auto backend = factory();
  register_backend(backend);
  return backend;
}

bool EncoderRegistry::contains(const std::string& id) const {
  std::lock_guard<std::mutex> lock(mutex_);
  for (const auto& [bid, b] : backends_) {
    if (bid == id) return true;
  }
  for (const auto& [fid, f] : factories_) {
    if (fid == id) return true;
  }
  return false;
}

std::vector<std::string> EncoderRegistry::list() const {
  std::lock_guard<std::mutex> lock(mutex_);
  std::vector<std::string> ids;
  for (const auto& [fid, f] : factories_) ids.push_back(fid);
  for (const auto& [bid, b] : backends_) {
    if (std::find(ids.begin(), ids.end(), bid) == ids.end())
      ids.push_back(bid);
  }
  return ids;
}

void EncoderRegistry::load_adapters_from_env() {
  const char* path = std::getenv("TEXTMANIA_BACKENDS");
  if (!path || !*path) return;
  load_adapters_from_file(path);
}

void EncoderRegistry::load_adapters_from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open backend manifest: " + path);
  }
  json manifest = json::parse(in, nullptr, false);
  if (manifest.is_discarded() || !manifest.contains("backends")) {
    throw ConfigError("backend manifest " + path +
                      " is not JSON with a 'backends' array");
  }
  for (const auto& entry : manifest["backends"]) {
    auto id = entry.at("id").get<std::string>();
    int dim = entry.at("dim").get<int>();
    auto pooling = pooling_from_name(entry.at("pooling").get<std::string>());
    auto command = entry.at("command").get<std::vector<std::string>>();
    register_factory(id, [id, dim, pooling, command] {
      return make_process_encoder(id, dim, pooling, command);
    });
  }
}

std::vector<std::string> list_backends() {
  return EncoderRegistry::global().list();
}

}  // namespace textmania
