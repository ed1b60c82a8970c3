#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "doctest.h"
#include "textmania/encoder.hpp"
#include "textmania/errors.hpp"

using namespace textmania;

namespace {

bool bitwise_equal(const Eigen::VectorXf& a, const Eigen::VectorXf& b) {
  if (a.size() != b.size()) return false;
  return std::memcmp(a.data(), b.data(),
                     sizeof(float) * static_cast<size_t>(a.size())) == 0;
}

double cosine(const Eigen::VectorXf& a, const Eigen::VectorXf& b) {
  return a.cast<double>().dot(b.cast<double>()) /
         (a.cast<double>().norm() * b.cast<double>().norm());
}

}  // namespace

TEST_CASE("pooling names round trip") {
  for (auto p : {Pooling::kNativeSentence, Pooling::kMeanTokens,
                 Pooling::kSumTokens}) {
    CHECK(pooling_from_name(pooling_name(p)) == p);
  }
  CHECK_THROWS_AS(pooling_from_name("max_tokens"), ConfigError);
}

TEST_CASE("toy token vectors are deterministic unit vectors") {
  const auto v1 = toy_token_vector("red", 64, 0);
  const auto v2 = toy_token_vector("red", 64, 0);
  CHECK(bitwise_equal(v1, v2));
  CHECK(v1.size() == 64);
  CHECK(v1.norm() == doctest::Approx(1.0).epsilon(1e-6));

  const auto blue = toy_token_vector("blue", 64, 0);
  CHECK(std::abs(cosine(v1, blue)) < 0.3);

  // Different seed, different vector.
  const auto other_seed = toy_token_vector("red", 64, 1);
  CHECK_FALSE(bitwise_equal(v1, other_seed));

  CHECK_THROWS_AS(toy_token_vector("red", 1, 0), ConfigError);
  CHECK_THROWS_AS(toy_token_vector("", 64, 0), InputError);
}

TEST_CASE("sampled toy vocabulary is near-orthogonal at dim 64") {
  const std::vector<std::string> words = {
      "red",  "blue",  "green", "tiny", "huge",  "cat",  "dog",
      "bird", "tree",  "rock",  "sky",  "boat",  "lamp", "road",
      "fish", "horse", "apple", "pear", "chair", "door"};
  std::vector<Eigen::VectorXf> vecs;
  for (const auto& w : words) vecs.push_back(toy_token_vector(w, 64, 0));
  for (size_t i = 0; i < vecs.size(); ++i)
    for (size_t j = i + 1; j < vecs.size(); ++j)
      CHECK(std::abs(cosine(vecs[i], vecs[j])) < 0.5);
}

TEST_CASE("toy encoder sums token vectors") {
  ToyHashEncoder enc(64, 0);
  CHECK(enc.dim() == 64);
  CHECK(enc.pooling() == Pooling::kSumTokens);

  const auto dog = enc.embed("dog");
  CHECK(bitwise_equal(dog, toy_token_vector("dog", 64, 0)));

  // Two-token pooling equals the explicit summation of the token vectors,
  // accumulated the same way (double precision, one final rounding).
  const auto red_dog = enc.embed("red dog");
  const Eigen::VectorXd expected =
      toy_token_vector("red", 64, 0).cast<double>() +
      toy_token_vector("dog", 64, 0).cast<double>();
  CHECK(bitwise_equal(red_dog, expected.cast<float>()));
}

TEST_CASE("toy pooling is linear over concatenation") {
  ToyHashEncoder enc(32, 5);
  const Eigen::VectorXd ab = enc.embed_precise("big red dog");
  const Eigen::VectorXd a = enc.embed_precise("big");
  const Eigen::VectorXd b = enc.embed_precise("red dog");
  CHECK((ab - (a + b)).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("embed_text validates input and output") {
  ToyHashEncoder enc(16, 0);
  const TextEmbedding e = embed_text(enc, "a photo of a cat");
  CHECK(e.vector.size() == 16);
  CHECK(e.backend_id == "toy-hash");
  CHECK(e.text == "a photo of a cat");
  CHECK(e.vector.allFinite());
  CHECK_THROWS_AS(embed_text(enc, ""), InputError);
}

TEST_CASE("embedding the same string twice is bitwise identical") {
  ToyHashEncoder enc(48, 9);
  CHECK(bitwise_equal(enc.embed("a photo of a gigantic green bus"),
                      enc.embed("a photo of a gigantic green bus")));
}

TEST_CASE("registry lists toy-hash and synthesizes sized variants") {
  auto& reg = EncoderRegistry::global();
  CHECK(reg.contains("toy-hash"));
  const auto listed = list_backends();
  CHECK(std::find(listed.begin(), listed.end(), "toy-hash") != listed.end());

  auto sized = reg.get("toy-hash:16");
  CHECK(sized->dim() == 16);
  auto seeded = reg.get("toy-hash:16:3");
  CHECK(seeded->dim() == 16);
  CHECK_FALSE(bitwise_equal(sized->embed("dog"), seeded->embed("dog")));

  CHECK_THROWS_AS(reg.get("no-such-backend"), BackendError);
}

TEST_CASE("duplicate registration keeps a single entry") {
  auto& reg = EncoderRegistry::global();
  auto enc = std::make_shared<ToyHashEncoder>(8, 0, "dup-test");
  reg.register_backend(enc);
  reg.register_backend(enc);
  const auto listed = reg.list();
  CHECK(std::count(listed.begin(), listed.end(), "dup-test") == 1);
}

TEST_CASE("factories construct lazily and idempotently") {
  auto& reg = EncoderRegistry::global();
  int calls = 0;
  reg.register_factory("lazy-test", [&calls] {
    ++calls;
    return std::make_shared<ToyHashEncoder>(8, 0, "lazy-test");
  });
  CHECK(calls == 0);
  CHECK(reg.contains("lazy-test"));
  auto first = reg.get("lazy-test");
  auto second = reg.get("lazy-test");
  CHECK(calls == 1);
  CHECK(first.get() == second.get());
}
