#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace textmania {

enum class Pooling {
  kNativeSentence,  // encoder's own sentence embedding (contrastive models)
  kMeanTokens,      // average of token embeddings (general language models)
  kSumTokens,       // sum of token embeddings (toy backend)
};

std::string pooling_name(Pooling p);
Pooling pooling_from_name(const std::string& name);

// A text encoder with a fixed output dimension. Immutable after load;
// embed() is safe to call concurrently.
class EncoderBackend {
 public:
  virtual ~EncoderBackend() = default;
  virtual const std::string& id() const = 0;
  virtual int dim() const = 0;
  virtual Pooling pooling() const = 0;
  virtual Eigen::VectorXf embed(const std::string& text) const = 0;

  // Double-precision pooled embedding. Backends that pool by accumulation
  // override this so that differences of pooled sums cancel shared tokens
  // exactly; the default is a cast of embed().
  virtual Eigen::VectorXd embed_precise(const std::string& text) const;
};

struct TextEmbedding {
  Eigen::VectorXf vector;
  std::string backend_id;
  std::string text;
};

// Embed with validation: nonempty input, finite output of the declared dim.
TextEmbedding embed_text(const EncoderBackend& backend,
                         const std::string& text);

// Deterministic pseudo-random unit vector for a token: a hash of
// (token, seed) seeds the draw, so the same inputs always give the same
// vector on every platform.
Eigen::VectorXf toy_token_vector(const std::string& token, int dim,
                                 uint64_t seed);

// Word-level whitespace tokenization, one hash-seeded unit vector per token,
// sum pooling accumulated at double precision. The linearity
// embed(A concat B) == embed(A) + embed(B) makes difference vectors
// analytically exact, which is what the test oracles rely on.
class ToyHashEncoder : public EncoderBackend {
 public:
  explicit ToyHashEncoder(int dim = 64, uint64_t seed = 0,
                          std::string id = "toy-hash");

  const std::string& id() const override { return id_; }
  int dim() const override { return dim_; }
  Pooling pooling() const override { return Pooling::kSumTokens; }
  Eigen::VectorXf embed(const std::string& text) const override;
  Eigen::VectorXd embed_precise(const std::string& text) const override;
  uint64_t seed() const { return seed_; }

 private:
  std::string id_;
  int dim_;
  uint64_t seed_;
};

// Out-of-process adapter speaking a line-delimited JSON protocol on
// stdin/stdout. The child is spawned lazily on first use and must announce
// itself with one line {"id":..., "dim":..., "pooling":...} before serving
// {"text":...} -> {"vector":[...]} requests. TEXTMANIA_MODEL_CACHE, when
// set, is exported to the child as the model cache directory.
std::shared_ptr<EncoderBackend> make_process_encoder(
    const std::string& id, int dim, Pooling pooling,
    std::vector<std::string> command);

class EncoderRegistry {
 public:
  static EncoderRegistry& global();

  // Idempotent by id: re-registering the same id keeps a single entry.
  void register_backend(std::shared_ptr<EncoderBackend> backend);
  void register_factory(
      const std::string& id,
      std::function<std::shared_ptr<EncoderBackend>()> factory);

  // Resolves an id, instantiating lazily from a factory when needed.
  // "toy-hash:<dim>[:<seed>]" ids are synthesized on the fly.
  std::shared_ptr<EncoderBackend> get(const std::string& id);
  bool contains(const std::string& id) const;
  std::vector<std::string> list() const;

  // Registers adapters described by the JSON manifest that the
  // TEXTMANIA_BACKENDS environment variable points at, if any.
  void load_adapters_from_env();
  void load_adapters_from_file(const std::string& path);

 private:
  EncoderRegistry();
  mutable std::mutex mutex_;
  std::vector<std::pair<std::string, std::shared_ptr<EncoderBackend>>>
      backends_;
  std::vector<std::pair<std::string,
                        std::function<std::shared_ptr<EncoderBackend>()>>>
      factories_;
};

// Registry listing including lazily constructible backends.
std::vector<std::string> list_backends();

}  // namespace textmania
