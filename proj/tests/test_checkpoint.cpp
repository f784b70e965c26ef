#include <doctest.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

#include "dcdm/checkpoint.hpp"
#include "dcdm/config.hpp"

using namespace dcdm;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) : path("/tmp/dcdm_test_" + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.shape == b.shape &&
         std::memcmp(a.ptr(), b.ptr(), sizeof(double) * a.numel()) == 0;
}

}  // namespace

TEST_CASE("checkpoint round-trips parameters bitwise") {
  ModelConfig cfg;
  cfg.d = 8;
  cfg.n_layers = 2;
  cfg.n_heads = 2;
  cfg.k = 3;
  cfg.h = 2;
  cfg.max_len = 16;
  cfg.seq_len = 6;
  cfg.d_ff = 16;
  cfg.vocab_size = 11;
  Rng rng(5);
  Parameters p = Parameters::init(cfg, rng);
  p.at("chunk.bias").at(1) = -0.062499999999999997;  // awkward bits on purpose
  RunConfig run;
  run.model = cfg;
  const std::string text = serialize_config(run);

  TempFile f("ckpt.bin");
  write_checkpoint(f.path, text, p);
  Checkpoint back = read_checkpoint(f.path);

  CHECK(back.config_text == text);
  REQUIRE(back.params.order == p.order);
  for (const auto& name : p.order) CHECK(bitwise_equal(back.params.at(name), p.at(name)));

  // the stored config text parses back to the identical model shape
  RunConfig parsed = parse_config(back.config_text);
  CHECK(parsed.model.d == cfg.d);
  CHECK(parsed.model.k == cfg.k);
  CHECK(parsed.model.seq_len == cfg.seq_len);
}

TEST_CASE("special values survive the binary format") {
  Parameters p;
  Tensor t = Tensor::zeros({4});
  t.at(0) = 0.1 + 0.2;               // not exactly 0.3
  t.at(1) = -0.0;
  t.at(2) = 1e-308;                  // subnormal neighborhood
  t.at(3) = 1.7976931348623157e308;  // max double
  p.add("weird", t);

  TempFile f("ckpt_special.bin");
  write_checkpoint(f.path, "", p);
  Checkpoint back = read_checkpoint(f.path);
  CHECK(bitwise_equal(back.params.at("weird"), t));
  CHECK(std::signbit(back.params.at("weird").at(1)));
}

TEST_CASE("corrupt files are rejected with the path in the message") {
  TempFile f("ckpt_bad.bin");
  {
    std::ofstream out(f.path, std::ios::binary);
    out << "NOPE";
  }
  CHECK_THROWS_WITH_AS(read_checkpoint(f.path), doctest::Contains(f.path.c_str()),
                       std::runtime_error);
  CHECK_THROWS_AS(read_checkpoint("/tmp/does_not_exist_dcdm.bin"), std::runtime_error);

  // truncation mid-record
  ModelConfig cfg;
  cfg.d = 4;
  cfg.n_layers = 2;
  cfg.n_heads = 2;
  cfg.k = 2;
  cfg.h = 2;
  cfg.max_len = 8;
  cfg.seq_len = 4;
  cfg.d_ff = 8;
  cfg.vocab_size = 7;
  Rng rng(7);
  Parameters p = Parameters::init(cfg, rng);
  TempFile g("ckpt_trunc.bin");
  write_checkpoint(g.path, "x = y", p);
  std::ifstream in(g.path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  {
    std::ofstream out(g.path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  CHECK_THROWS_WITH_AS(read_checkpoint(g.path), doctest::Contains("truncated"),
                       std::runtime_error);
}

TEST_CASE("train state sidecar round-trips exactly") {
  TrainState s;
  s.step = 1234;
  s.seconds = 98.7654321;
  Rng rng(42);
  rng.uniform();
  rng.normal();
  s.rng_state = rng.serialize();
  s.counts = {10, 0, 7, 3};
  s.moments.emplace_back("m.embed.tok", Tensor::randn({5, 3}, rng, 0.1));
  s.moments.emplace_back("v.embed.tok", Tensor::randn({5, 3}, rng, 0.1));

  TempFile f("state.bin");
  write_train_state(f.path, s);
  TrainState back = read_train_state(f.path);

  CHECK(back.step == s.step);
  CHECK(back.seconds == s.seconds);
  CHECK(back.rng_state == s.rng_state);
  CHECK(back.counts == s.counts);
  REQUIRE(back.moments.size() == 2);
  CHECK(back.moments[0].first == "m.embed.tok");
  CHECK(bitwise_equal(back.moments[0].second, s.moments[0].second));
  CHECK(bitwise_equal(back.moments[1].second, s.moments[1].second));

  // the restored rng continues the exact stream
  Rng a(0), b(0);
  a.deserialize(back.rng_state);
  b.deserialize(s.rng_state);
  for (int i = 0; i < 5; ++i) CHECK(a.uniform() == b.uniform());

  // a model checkpoint does not parse as a sidecar
  Parameters p;
  p.add("w", Tensor::zeros({1}));
  TempFile g("ckpt_as_state.bin");
  write_checkpoint(g.path, "", p);
  CHECK_THROWS_AS(read_train_state(g.path), std::runtime_error);
}
