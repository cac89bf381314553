#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "mlnn/network.hpp"

namespace mlnn {

using json = nlohmann::json;

/// Checkpoint document for one error-map network. Doubles are serialized as
/// shortest-round-trip decimals, so save/load is bit-exact.
inline json network_to_json(const ErrorMapNetwork& net, std::uint64_t seed = 0,
                            const json& training_meta = json::object()) {
    json doc;
    doc["format"] = "mlnn-network";
    doc["version"] = 1;
    doc["architecture"] = {{"field_shape", net.field_shape},
                           {"z_dim", net.z_dim},
                           {"filters_first_layer", net.filters_first_layer}};
    doc["seed"] = seed;
    doc["training"] = training_meta;

    auto dense_to_json = [](const DenseLayer& d) {
        return json{{"n_out", d.n_out()},
                    {"n_in", d.n_in()},
                    {"activation", d.activation == Activation::ReLU ? "relu" : "linear"},
                    {"weights", d.weights.data},
                    {"bias", d.bias},
                    {"frozen", d.frozen}};
    };

    doc["conv_layers"] = json::array();
    for (const auto& c : net.conv_layers)
        doc["conv_layers"].push_back(json{{"rank", c.rank},
                                          {"in_channels", c.in_channels},
                                          {"out_channels", c.out_channels},
                                          {"kernel", c.kernel.data},
                                          {"bias", c.bias},
                                          {"frozen", c.frozen}});
    doc["fc_layers"] = json::array();
    for (const auto& d : net.fc_layers) doc["fc_layers"].push_back(dense_to_json(d));
    doc["output_layer"] = dense_to_json(net.output_layer);
    return doc;
}

inline ErrorMapNetwork network_from_json(const json& doc) {
    if (doc.value("format", "") != "mlnn-network")
        throw std::invalid_argument("network_from_json: not a network checkpoint");
    ErrorMapNetwork net;
    net.field_shape = doc.at("architecture").at("field_shape").get<std::vector<std::size_t>>();
    net.z_dim = doc.at("architecture").at("z_dim").get<std::size_t>();
    net.filters_first_layer = doc.at("architecture").at("filters_first_layer").get<std::size_t>();

    auto dense_from_json = [](const json& j) {
        DenseLayer d;
        const std::size_t no = j.at("n_out").get<std::size_t>();
        const std::size_t ni = j.at("n_in").get<std::size_t>();
        d.weights = Tensor({no, ni}, j.at("weights").get<std::vector<double>>());
        d.bias = j.at("bias").get<std::vector<double>>();
        d.activation = j.at("activation") == "relu" ? Activation::ReLU : Activation::Linear;
        d.frozen = j.at("frozen").get<bool>();
        if (d.bias.size() != no)
            throw std::invalid_argument("network_from_json: dense bias size mismatch");
        return d;
    };

    for (const auto& j : doc.at("conv_layers")) {
        ConvLayer c;
        c.rank = j.at("rank").get<std::size_t>();
        c.in_channels = j.at("in_channels").get<std::size_t>();
        c.out_channels = j.at("out_channels").get<std::size_t>();
        std::vector<std::size_t> kshape = {c.out_channels, c.in_channels, 3};
        if (c.rank == 2) kshape.push_back(3);
        c.kernel = Tensor(kshape, j.at("kernel").get<std::vector<double>>());
        c.bias = j.at("bias").get<std::vector<double>>();
        c.frozen = j.at("frozen").get<bool>();
        net.conv_layers.push_back(std::move(c));
    }
    for (const auto& j : doc.at("fc_layers")) net.fc_layers.push_back(dense_from_json(j));
    net.output_layer = dense_from_json(doc.at("output_layer"));
    return net;
}

inline void save_network(const ErrorMapNetwork& net, const std::string& path,
                         std::uint64_t seed = 0, const json& training_meta = json::object()) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("save_network: cannot open " + path);
    f << network_to_json(net, seed, training_meta).dump(2) << "\n";
}

inline ErrorMapNetwork load_network(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_network: cannot open " + path);
    json doc = json::parse(f);
    return network_from_json(doc);
}

}  // namespace mlnn
