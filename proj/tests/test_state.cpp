#include <fstream>

#include "awada/checkpoint.hpp"
#include "awada/config.hpp"
#include "awada/image_io.hpp"
#include "awada/ops.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace awada;

TEST_SUITE("checkpoint") {

TEST_CASE("save and load round trip") {
  testutil::TempDir tmp("ck");
  Checkpoint ck;
  ck.stage = "baseline";
  ck.config_hash = 0xDEADBEEFCAFEF00DULL;
  ck.blocks["param/g_st/enc1.w"] = {1.5, -0.0, 1e-300, 3.141592653589793};
  ck.blocks["empty"] = {};
  ck.ints["gan/step"] = 1234567890123ULL;
  save_checkpoint(ck, tmp.path() / "a.awck");
  CHECK(load_checkpoint(tmp.path() / "a.awck") == ck);
  CHECK_FALSE(std::filesystem::exists(tmp.path() / "a.awck.tmp"));
  CHECK_THROWS_WITH_AS(ck.block("nope"), doctest::Contains("nope"), std::runtime_error);
  CHECK_THROWS_AS(ck.integer("nope"), std::runtime_error);
}

TEST_CASE("damaged files are rejected naming the file") {
  testutil::TempDir tmp("ck");
  Checkpoint ck;
  ck.stage = "s";
  ck.blocks["x"] = {1, 2, 3};
  const auto path = tmp.path() / "b.awck";
  save_checkpoint(ck, path);
  auto bytes = read_file_bytes(path);

  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x10;
  write_file_bytes(path, flipped);
  CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("b.awck"), std::runtime_error);

  write_file_bytes(path, std::span(bytes).first(bytes.size() - 9));
  CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);

  auto magic = bytes;
  magic[0] = 'X';
  write_file_bytes(path, magic);
  CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("magic"), std::runtime_error);

  CHECK_THROWS_AS(load_checkpoint(tmp.path() / "absent.awck"), std::runtime_error);
}

TEST_CASE("config hash guard") {
  Checkpoint ck;
  ck.stage = "baseline";
  ck.config_hash = 1;
  CHECK_NOTHROW(check_config_hash(ck, 1, false));
  CHECK_THROWS_WITH_AS(check_config_hash(ck, 2, false), doctest::Contains("--force"), std::runtime_error);
  CHECK_NOTHROW(check_config_hash(ck, 2, true));
}

TEST_CASE("parameters and optimizer state restore exactly") {
  const Tensor a = Tensor::parameter("net/a", {2, 2}, {1, 2, 3, 4});
  const Tensor b = Tensor::parameter("net/b", {3}, {5, 6, 7});
  Adam adam({a, b}, {});
  sum(add(square(a), Tensor::zeros({2, 2}))).backward();
  adam.step();
  Checkpoint ck;
  store_parameters(ck, "param", {a, b});
  store_optimizer(ck, "adam", adam);

  const Tensor a2 = Tensor::parameter("net/a", {2, 2}, {0, 0, 0, 0});
  const Tensor b2 = Tensor::parameter("net/b", {3}, {0, 0, 0});
  Adam adam2({a2, b2}, {});
  restore_parameters(ck, "param", {a2, b2});
  restore_optimizer(ck, "adam", adam2);
  CHECK(std::vector<double>(a2.values().begin(), a2.values().end()) ==
        std::vector<double>(a.values().begin(), a.values().end()));
  CHECK(adam2.step_count() == 1);
  CHECK(adam2.first_moment(0) == adam.first_moment(0));
  CHECK(adam2.second_moment(1) == adam.second_moment(1));

  const Tensor wrong = Tensor::parameter("net/a", {3}, {0, 0, 0});
  CHECK_THROWS_WITH_AS(restore_parameters(ck, "param", {wrong}), doctest::Contains("net/a"), std::runtime_error);
  const Tensor missing = Tensor::parameter("net/c", {1}, {0});
  CHECK_THROWS_AS(restore_parameters(ck, "param", {missing}), std::runtime_error);
}

}  // TEST_SUITE

TEST_SUITE("config") {

TEST_CASE("defaults validate and text round trips") {
  AwadaConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.total_gan_steps() == 20 * 100);
  c.gan_steps = 7;
  CHECK(c.total_gan_steps() == 7);

  AwadaConfig d;
  d.set("fog_beta", "1.25");
  d.set("placement", "x-x-");
  d.set("attn_source", "random");
  d.set("random_p", "0.1");
  d.set("eval_seeds", "4,5");
  d.set("gan_form", "log");
  testutil::TempDir tmp("cfg");
  std::ofstream(tmp.path() / "c.cfg") << "# comment\n" << d.to_text();
  AwadaConfig e;
  e.load_file(tmp.path() / "c.cfg");
  CHECK(e.to_text() == d.to_text());
  CHECK(e.hash() == d.hash());
  CHECK(e.get("random_p") == "0.1");
  CHECK(e.eval_seeds == std::vector<std::uint64_t>{4, 5});
}

TEST_CASE("bad keys and values are named") {
  AwadaConfig c;
  CHECK_THROWS_WITH_AS(c.set("no_such_key", "1"), doctest::Contains("no_such_key"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(c.set("batch", "two"), doctest::Contains("batch"), std::invalid_argument);
  CHECK_THROWS_AS(c.set("semantic", "maybe"), std::invalid_argument);
  CHECK_THROWS_AS(c.set("style", "snow"), std::invalid_argument);
  testutil::TempDir tmp("cfg");
  std::ofstream(tmp.path() / "bad.cfg") << "batch = 2\nthis line is wrong\n";
  CHECK_THROWS_WITH_AS(c.load_file(tmp.path() / "bad.cfg"), doctest::Contains("bad.cfg:2"), std::invalid_argument);
  c.patch = 12;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("stage hashes only depend on their inputs") {
  const AwadaConfig base;
  AwadaConfig c = base;
  c.set("placement", "xxx-");
  CHECK(c.hash(AwadaConfig::Scope::baseline) == base.hash(AwadaConfig::Scope::baseline));
  CHECK(c.hash(AwadaConfig::Scope::detectors) == base.hash(AwadaConfig::Scope::detectors));
  CHECK(c.hash(AwadaConfig::Scope::awada) != base.hash(AwadaConfig::Scope::awada));
  c = base;
  c.set("eval_seeds", "9");
  CHECK(c.hash(AwadaConfig::Scope::awada) == base.hash(AwadaConfig::Scope::awada));
  CHECK(c.hash() != base.hash());
  c = base;
  c.set("n_source", "10");
  CHECK(c.hash(AwadaConfig::Scope::data) != base.hash(AwadaConfig::Scope::data));
  CHECK(c.hash(AwadaConfig::Scope::baseline) != base.hash(AwadaConfig::Scope::baseline));
}

}  // TEST_SUITE

TEST_SUITE("image_io") {

TEST_CASE("png round trip and checksums") {
  testutil::TempDir tmp("png");
  Image img(5, 3, 3);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = std::uint8_t(i * 17);
  write_png(tmp.path() / "a.png", img);
  CHECK(read_png(tmp.path() / "a.png", 3) == img);
  CHECK_THROWS_AS(read_png(tmp.path() / "a.png", 1), std::runtime_error);
  CHECK_THROWS_AS(read_png(tmp.path() / "none.png", 3), std::runtime_error);
  const std::string text = "123456789";
  const std::span<const std::uint8_t> bytes(reinterpret_cast<const std::uint8_t*>(text.data()), text.size());
  CHECK(crc32_of(bytes) == 0xCBF43926u);
  // Object id git assigns to a file holding "hello\n".
  const std::string hello = "hello\n";
  CHECK(git_blob_hash({reinterpret_cast<const std::uint8_t*>(hello.data()), hello.size()}) ==
        "ce013625030ba8dba906f756967f9e9ca394464a");
}

}  // TEST_SUITE
