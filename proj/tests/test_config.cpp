#include <doctest.h>

#include <stdexcept>

#include "dcdm/config.hpp"

using namespace dcdm;

TEST_CASE("defaults survive an empty config and validate") {
  RunConfig cfg = parse_config("");
  CHECK(cfg.model.mode == Mode::dcdm);
  CHECK(cfg.model.d == 64);
  CHECK(cfg.model.k == 8);
  CHECK(cfg.model.h == 16);
  CHECK(cfg.train.batch_size == 8);
  CHECK(cfg.train.max_steps == 2000);
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("keys, comments, and blank lines parse") {
  RunConfig cfg = parse_config(
      "# run shape\n"
      "mode = bdlm\n"
      "block_size = 4\n"
      "\n"
      "d=32\n"
      "  n_layers = 2  \n"
      "peak_lr = 1e-4\n"
      "corpus = data/train.bin\n");
  CHECK(cfg.model.mode == Mode::bdlm);
  CHECK(cfg.model.block_size == 4);
  CHECK(cfg.model.d == 32);
  CHECK(cfg.model.n_layers == 2);
  CHECK(cfg.train.peak_lr == 1e-4);
  CHECK(cfg.train.corpus == "data/train.bin");
}

TEST_CASE("unknown and duplicate keys are named in the error") {
  CHECK_THROWS_WITH_AS(parse_config("vocab = 10\n"), doctest::Contains("vocab"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(parse_config("d = 8\nd = 16\n"), doctest::Contains("duplicate"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(parse_config("just words\n"), doctest::Contains("line 1"),
                       std::invalid_argument);
}

TEST_CASE("malformed numbers name the key") {
  CHECK_THROWS_WITH_AS(parse_config("d = eight\n"), doctest::Contains("d"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(parse_config("peak_lr = 1e\n"), doctest::Contains("peak_lr"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(parse_config("mode = rnn\n"), doctest::Contains("mode"),
                       std::invalid_argument);
}

TEST_CASE("mode gating happens at validate") {
  RunConfig cfg = parse_config("mode = bdlm\n");
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("block_size"),
                       std::invalid_argument);
  cfg = parse_config("mode = mdlm\n");
  CHECK_NOTHROW(cfg.validate());  // k/h defaults are legal in every mode
  cfg = parse_config("batch_size = 0\n");
  CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("batch_size"),
                       std::invalid_argument);
  cfg = parse_config("warmup_steps = 5000\nmax_steps = 100\n");
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("serialize then parse round-trips every key") {
  RunConfig cfg = parse_config(
      "mode = dcdm\nd = 48\nn_layers = 3\nn_heads = 4\nk = 6\nh = 12\n"
      "max_len = 256\nseq_len = 96\nd_ff = 96\nlambda_chunk = 0.02\n"
      "mu_init_skew = 1.5\nbatch_size = 4\nmax_steps = 500\nwarmup_steps = 50\n"
      "peak_lr = 2.5e-4\nweight_decay = 0.005\nclip_norm = 0.5\neps_t = 0.002\n"
      "eta_b = 0.004\nbias_interval = 2\ncheckpoint_every = 100\n"
      "corpus = data/x.bin\n");
  RunConfig back = parse_config(serialize_config(cfg));
  CHECK(serialize_config(back) == serialize_config(cfg));
  CHECK(back.model.k == 6);
  CHECK(back.model.mu_init_skew == 1.5);
  CHECK(back.train.eta_b == 0.004);
  CHECK(back.train.corpus == "data/x.bin");
}
