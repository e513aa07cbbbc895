#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "mux/binio.hpp"
#include "mux/checkpoint.hpp"
#include "mux/errors.hpp"
#include "mux/model.hpp"
#include "refmath.hpp"

using namespace mux;

namespace {

Architecture flat_classifier(const std::string& id, int width, int hidden, int classes) {
  Architecture a;
  a.id = id;
  a.input_shape = {1, 1, width};
  a.classes = classes;
  a.layers = {LayerDesc::flatten(), LayerDesc::dense(width, hidden), LayerDesc::relu(),
              LayerDesc::dense(hidden, classes)};
  return a;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("zero-weight model emits zero logits and embedding") {
  const Architecture arch = flat_classifier("zero", 6, 4, 3);
  ClassifierModel m;
  m.arch = arch;
  Rng rng(0);
  m.params = init_params(arch, rng);
  for (Tensor& p : m.params) {
    for (float& v : p.data) v = 0.0f;
  }
  const auto [logits, emb] = m.forward(Tensor({1, 1, 6}, 1.0f));
  CHECK(logits.shape == std::vector<int>{3});
  CHECK(emb.shape == std::vector<int>{4});
  for (float v : logits.data) CHECK(v == 0.0f);
  for (float v : emb.data) CHECK(v == 0.0f);
}

TEST_CASE("identity dense layer passes the input through as logits") {
  Architecture a;
  a.id = "identity";
  a.input_shape = {1, 1, 4};
  a.classes = 4;
  a.layers = {LayerDesc::flatten(), LayerDesc::dense(4, 4)};
  ClassifierModel m;
  m.arch = a;
  Tensor w({4, 4});
  for (int i = 0; i < 4; ++i) w.at(i, i) = 1.0f;
  m.params = {w, Tensor({4})};
  const Tensor x = Tensor::from({1, 1, 4}, {0.5f, -2.0f, 3.0f, 1.0f});
  const auto [logits, emb] = m.forward(x);
  CHECK(logits.data == x.data);
  CHECK(emb.data == x.data);  // embedding is the activation feeding the final dense
}

TEST_CASE("seeded forward matches an independent double-precision trace") {
  const Architecture arch = flat_classifier("trace", 5, 7, 3);
  const ClassifierModel m = make_classifier(arch, 424242);
  Rng rng(1);
  Tensor x({1, 1, 5});
  for (float& v : x.data) v = rng.normal();

  const auto [logits, emb] = m.forward(x);
  const refmath::RModelOut ref = refmath::forward_arch(arch, refmath::widen(m.params),
                                                       refmath::Vec(x.data.begin(), x.data.end()));
  for (int i = 0; i < 3; ++i) {
    CHECK(logits.data[static_cast<std::size_t>(i)] == doctest::Approx(ref.logits[static_cast<std::size_t>(i)]).epsilon(1e-5));
  }
  for (int i = 0; i < 7; ++i) {
    CHECK(emb.data[static_cast<std::size_t>(i)] == doctest::Approx(ref.embedding[static_cast<std::size_t>(i)]).epsilon(1e-5));
  }
}

TEST_CASE("forward rejects input shape mismatch") {
  const ClassifierModel m = make_classifier(flat_classifier("shape", 5, 4, 2), 7);
  CHECK_THROWS_AS(m.forward(Tensor({1, 1, 6})), NumericError);
}

TEST_CASE("projection with an identity head normalizes the embedding") {
  ProjectionHead h;
  h.weight = Tensor({2, 2});
  h.weight.at(0, 0) = 1.0f;
  h.weight.at(1, 1) = 1.0f;

  SUBCASE("already-unit embedding is unchanged") {
    const Tensor e = h.project(Tensor::from({2}, {1.0f, 0.0f}));
    CHECK(e.data[0] == doctest::Approx(1.0f));
    CHECK(e.data[1] == doctest::Approx(0.0f));
  }
  SUBCASE("hand arithmetic: [3,4] becomes [0.6, 0.8]") {
    const Tensor e = h.project(Tensor::from({2}, {3.0f, 4.0f}));
    CHECK(e.data[0] == doctest::Approx(0.6f).epsilon(1e-6));
    CHECK(e.data[1] == doctest::Approx(0.8f).epsilon(1e-6));
  }
  SUBCASE("positive scaling of the embedding leaves the projection unchanged") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
      Tensor g({2});
      g.data[0] = rng.normal() + 2.0f;
      g.data[1] = rng.normal();
      const float k = rng.next_float() * 10.0f + 0.01f;
      Tensor gk = g;
      for (float& v : gk.data) v *= k;
      const Tensor e1 = h.project(g);
      const Tensor e2 = h.project(gk);
      for (int i = 0; i < 2; ++i) CHECK(std::abs(e1.data[static_cast<std::size_t>(i)] - e2.data[static_cast<std::size_t>(i)]) < 1e-5);
    }
  }
  SUBCASE("degenerate projection raises instead of emitting NaN") {
    CHECK_THROWS_AS(h.project(Tensor({2})), NumericError);
  }
}

TEST_CASE("count_flops follows the documented conventions") {
  SUBCASE("bare 10x10 dense layer costs 200 FLOPs") {
    Architecture a;
    a.id = "d";
    a.input_shape = {1, 1, 10};
    a.classes = 0;
    a.layers = {LayerDesc::flatten(), LayerDesc::dense(10, 10)};
    CHECK(count_flops(a) == 200);
  }
  SUBCASE("empty model costs nothing") {
    Architecture a;
    a.id = "empty";
    a.input_shape = {1, 2, 2};
    a.classes = 0;
    CHECK(count_flops(a) == 0);
  }
  SUBCASE("doubling the output width doubles a dense layer's cost") {
    Architecture a;
    a.id = "w";
    a.input_shape = {1, 1, 8};
    a.classes = 0;
    a.layers = {LayerDesc::flatten(), LayerDesc::dense(8, 16)};
    Architecture b = a;
    b.layers[1] = LayerDesc::dense(8, 32);
    CHECK(count_flops(b) == 2 * count_flops(a));
  }
  SUBCASE("conv cost formula") {
    Architecture a;
    a.id = "c";
    a.input_shape = {2, 6, 6};
    a.classes = 0;
    a.layers = {LayerDesc::conv(2, 3, 3, 3, 1)};
    // 2 * F * C * kh * kw * OH * OW = 2 * 3 * 2 * 3 * 3 * 4 * 4
    CHECK(count_flops(a) == 2LL * 3 * 2 * 3 * 3 * 4 * 4);
  }
  SUBCASE("relu costs one op per element, layers are additive") {
    Architecture a;
    a.id = "r";
    a.input_shape = {1, 1, 8};
    a.classes = 0;
    a.layers = {LayerDesc::flatten(), LayerDesc::dense(8, 16)};
    Architecture b = a;
    b.layers.push_back(LayerDesc::relu());
    CHECK(count_flops(b) == count_flops(a) + 16);
  }
}

TEST_CASE("architecture JSON round trip preserves the descriptor") {
  const Architecture a = flat_classifier("roundtrip", 6, 5, 4);
  const Architecture b = Architecture::from_json(a.to_json());
  CHECK(b.id == a.id);
  CHECK(b.input_shape == a.input_shape);
  CHECK(b.classes == a.classes);
  CHECK(b.layers.size() == a.layers.size());
  CHECK(b.to_json() == a.to_json());
}

TEST_CASE("architecture validation rejects inconsistent descriptors") {
  Architecture a = flat_classifier("bad", 6, 5, 4);
  a.layers[1] = LayerDesc::dense(7, 5);  // wrong input width
  CHECK_THROWS_AS(a.output_shape(), ConfigError);

  Architecture b = flat_classifier("bad2", 6, 5, 4);
  b.layers.back() = LayerDesc::dense(5, 3);  // classes disagree
  CHECK_THROWS_AS(b.output_shape(), ConfigError);
}

TEST_CASE("checkpoint round trip is bit-exact") {
  const auto path = temp_file("muxinfer_test_ckpt.muxc");
  const CostedModel m = make_costed_model(flat_classifier("ck", 6, 5, 4), 8, 99);
  TrainMeta meta;
  meta.epochs = 3;
  meta.final_losses = {0.5, 0.25};
  meta.val_accuracy = 0.75;
  save_classifier(path.string(), m, 1234, meta);

  const LoadedClassifier lc = load_classifier(path.string());
  CHECK(lc.seed == 1234);
  CHECK(lc.meta.epochs == 3);
  CHECK(lc.meta.val_accuracy == doctest::Approx(0.75));
  CHECK(lc.model.flops == m.flops);
  REQUIRE(lc.model.model.params.size() == m.model.params.size());
  for (std::size_t i = 0; i < m.model.params.size(); ++i) {
    CHECK(lc.model.model.params[i].data == m.model.params[i].data);
  }
  CHECK(lc.model.head.weight.data == m.head.weight.data);
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint loader rejects corrupted and foreign files") {
  const auto path = temp_file("muxinfer_test_bad.muxc");
  const CostedModel m = make_costed_model(flat_classifier("bad", 6, 5, 4), 8, 7);
  save_classifier(path.string(), m, 1, TrainMeta{});

  SUBCASE("corrupted magic bytes") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.put('X');
    f.close();
    CHECK_THROWS_AS(load_classifier(path.string()), IoError);
  }
  SUBCASE("flipped payload byte breaks the checksum") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(32);
    f.put('\x7f');
    f.close();
    CHECK_THROWS_WITH_AS(load_classifier(path.string()), doctest::Contains("checksum"), IoError);
  }
  SUBCASE("truncated file") {
    const auto size = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, size / 2);
    // resize keeps the old CRC location garbage, so either a checksum or a
    // truncation error is acceptable; both are IoError
    CHECK_THROWS_AS(load_classifier(path.string()), IoError);
  }
  SUBCASE("newer version names both versions") {
    ByteWriter w;
    w.bytes("MUXC", 4);
    w.u32(99);
    w.str("{}");
    w.u32(0);
    w.finish_to_file(path.string());
    try {
      load_classifier(path.string());
      FAIL("expected IoError");
    } catch (const IoError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("99") != std::string::npos);
      CHECK(msg.find("1") != std::string::npos);
    }
  }
  std::filesystem::remove(path);
}

TEST_CASE("crc32 matches the standard check value") {
  // CRC-32/ISO-HDLC of "123456789" is 0xCBF43926
  const char* s = "123456789";
  CHECK(crc32(reinterpret_cast<const std::uint8_t*>(s), 9) == 0xCBF43926u);
}
