#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <sstream>

#include "shallom/checkpoint.hpp"
#include "shallom/config.hpp"
#include "toy.hpp"

using namespace shallom;

namespace {

KeyValues kv(const std::string& text) {
  std::istringstream in(text);
  return parse_key_values(in, "mem");
}

}  // namespace

TEST_CASE("parse_key_values") {
  const auto values = kv("# comment\n\nd = 30\n  dropout_rate=0.5  \n");
  CHECK(values.at("d") == "30");
  CHECK(values.at("dropout_rate") == "0.5");
  CHECK(values.size() == 2);
  CHECK_THROWS_AS(kv("d 30\n"), ParseError);
  CHECK_THROWS_AS(kv("d = 1\nd = 2\n"), ParseError);
  CHECK_THROWS_AS(read_key_values("/nonexistent/config.txt"), IoError);
}

TEST_CASE("apply_hyperparams overrides only the named fields") {
  const auto h = apply_hyperparams({}, kv("d = 30\nk = 90\nl2_coefficient = 0.1\nseed = 9\n"));
  CHECK(h.d == 30);
  CHECK(h.k == 90);
  CHECK(h.l2_coefficient == 0.1);
  CHECK(h.seed == 9);
  CHECK(h.epochs == Hyperparams{}.epochs);
  CHECK_THROWS_AS(apply_hyperparams({}, kv("d = thirty\n")), ConfigError);
  CHECK_THROWS_AS(apply_hyperparams({}, kv("dropout_rate = 0.5x\n")), ConfigError);
  CHECK_THROWS_AS(check_known_keys(kv("depth = 3\n"), "mem"), ConfigError);
  CHECK_NOTHROW(check_known_keys(kv("d = 3\nthreads = 2\noov_policy = skip\n"), "mem"));
}

TEST_CASE("hyperparameters survive a format / parse round trip exactly") {
  Hyperparams h;
  h.d = 200;
  h.k = 100;
  h.dropout_rate = 0.1 + 0.2;  // not exactly representable as written
  h.learning_rate = 1.0 / 3.0;
  h.seed = 18446744073709551615ull;
  std::istringstream in(format_hyperparams(h));
  CHECK(apply_hyperparams({}, parse_key_values(in)) == h);
  CHECK(std::stod(format_double(0.1)) == 0.1);
}

TEST_CASE("grid files") {
  const auto grid = parse_grid_spec(kv("d = 30, 50\nk_factor = 0.5,3\nepochs = 10\n"));
  CHECK(grid.d == std::vector<std::int64_t>{30, 50});
  CHECK(grid.k_factor == std::vector<double>{0.5, 3.0});
  CHECK(grid.epochs == std::vector<std::int64_t>{10});
  CHECK(grid.batch_size == GridSpec{}.batch_size);
  CHECK(grid.size() == 2 * 2 * 1 * 2 * 3 * 2);
  CHECK_THROWS_AS(parse_grid_spec(kv("d = 30,,50\n")), ConfigError);
  CHECK_THROWS_AS(parse_grid_spec(kv("k = 30\n")), ConfigError);
}

TEST_CASE("grid CSV rows") {
  GridRecord ok{Hyperparams{}, 0.25, 1.5, {}};
  const auto row = grid_csv_row(ok);
  CHECK(row.ends_with(",ok"));
  const auto header = grid_csv_header();
  CHECK(std::count(row.begin(), row.end(), ',') == std::count(header.begin(), header.end(), ','));
  GridRecord failed{Hyperparams{}, std::nullopt, 0.0, "numeric: loss is \"nan\", stopping"};
  CHECK(grid_csv_row(failed).find("\"error: numeric: loss is \"\"nan\"\", stopping\"") != std::string::npos);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  const auto dir = toy::scratch_dir("checkpoint");
  const auto splits = toy::make_splits(toy::five_triples(), {}, {});
  const ModelShape shape{splits.vocab.num_entities(), splits.vocab.num_relations(), 3, 5};

  SUBCASE("double") {
    const auto params = init_params<double>(shape, 4);
    save_checkpoint(dir / "m.ckpt", splits.vocab, params);
    const auto loaded = load_checkpoint<double>(dir / "m.ckpt");
    CHECK(loaded.params == params);
    CHECK(loaded.vocab == splits.vocab);
    CHECK(predict_scores(loaded.params, 0, 1) == predict_scores(params, 0, 1));
    CHECK_THROWS_AS(load_checkpoint<float>(dir / "m.ckpt"), IoError);
  }
  SUBCASE("float") {
    const auto params = init_params<float>(shape, 4);
    save_checkpoint(dir / "m.ckpt", splits.vocab, params);
    CHECK(load_checkpoint<float>(dir / "m.ckpt").params == params);
  }
  SUBCASE("corruption is detected") {
    save_checkpoint(dir / "m.ckpt", splits.vocab, init_params<double>(shape, 4));
    std::string bytes;
    {
      std::ifstream in(dir / "m.ckpt", std::ios::binary);
      bytes.assign(std::istreambuf_iterator<char>(in), {});
    }
    auto write = [&](const std::string& content) {
      std::ofstream out(dir / "bad.ckpt", std::ios::binary);
      out << content;
    };
    write(bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS_AS(load_checkpoint<double>(dir / "bad.ckpt"), IoError);
    write(bytes + "x");
    CHECK_THROWS_AS(load_checkpoint<double>(dir / "bad.ckpt"), IoError);
    write("NOTACKPT" + bytes.substr(8));
    CHECK_THROWS_AS(load_checkpoint<double>(dir / "bad.ckpt"), IoError);
    CHECK_THROWS_AS(load_checkpoint<double>(dir / "missing.ckpt"), IoError);
  }
}
