#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>

#include "mlnn/checkpoint.hpp"
#include "mlnn/sha256.hpp"
#include "mlnn/train.hpp"

using namespace mlnn;

TEST_CASE("network checkpoints round-trip bit-exactly") {
    auto net = make_error_map_network({1, 9}, 2, 2, 2, 6, 2, 20250515);
    freeze_all(net);
    append_fc_layer(net, 5, 99);
    // Touch the parameters with awkward values.
    net.output_layer.weights.data[0] = 0.1 + 0.2;  // 0.30000000000000004
    net.output_layer.bias[1] = -1e-17;
    net.fc_layers[0].weights.data[3] = 1.0 / 3.0;

    const auto dir = std::filesystem::temp_directory_path() / "mlnn_ckpt_test";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "net.json").string();
    save_network(net, path, 20250515, {{"note", "test"}});

    ErrorMapNetwork loaded = load_network(path);
    CHECK(loaded.field_shape == net.field_shape);
    CHECK(loaded.z_dim == net.z_dim);
    CHECK(loaded.filters_first_layer == net.filters_first_layer);
    REQUIRE(loaded.conv_layers.size() == net.conv_layers.size());
    REQUIRE(loaded.fc_layers.size() == net.fc_layers.size());

    bool identical = true;
    std::vector<const std::vector<double>*> a, b;
    net.visit_blocks([&](const std::vector<double>& v, const auto&, bool, bool) { a.push_back(&v); });
    loaded.visit_blocks(
        [&](const std::vector<double>& v, const auto&, bool, bool) { b.push_back(&v); });
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a[i]->size() == b[i]->size());
        if (std::memcmp(a[i]->data(), b[i]->data(), a[i]->size() * sizeof(double)) != 0)
            identical = false;
    }
    CHECK(identical);

    // Frozen flags survive, so do activations on a forward pass.
    CHECK(loaded.fc_layers[0].frozen);
    CHECK(!loaded.output_layer.frozen);
    Rng rng(3);
    Tensor in({1, 9});
    for (double& v : in.data) v = rng.uniform(-1.0, 1.0);
    Tensor ya = network_forward(net, in, {0.1, 0.9});
    Tensor yb = network_forward(loaded, in, {0.1, 0.9});
    CHECK(std::memcmp(ya.data.data(), yb.data.data(), ya.numel() * sizeof(double)) == 0);

    // Save -> load -> save reproduces the same bytes.
    const std::string path2 = (dir / "net2.json").string();
    save_network(loaded, path2, 20250515, {{"note", "test"}});
    std::ifstream f1(path), f2(path2);
    std::stringstream s1, s2;
    s1 << f1.rdbuf();
    s2 << f2.rdbuf();
    CHECK(s1.str() == s2.str());
    std::filesystem::remove_all(dir);
}

TEST_CASE("checkpoint loader rejects foreign documents") {
    CHECK_THROWS_AS(network_from_json({{"format", "something-else"}}), std::invalid_argument);
}

TEST_CASE("sha256 matches the reference vectors") {
    CHECK(sha256_hex("") ==
          "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_hex("abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq") ==
          "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
}
