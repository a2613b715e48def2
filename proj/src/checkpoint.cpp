#include "ocmp/checkpoint.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace ocmp {

namespace {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "payload is written in host byte order");

constexpr const char* kMagic = "OCMPv";
constexpr int kVersion = 1;

json layer_to_json(const LayerSpec& l) {
    return json{{"kind", to_string(l.kind)},    {"in", l.in_channels},   {"out", l.out_channels},
                {"kernel", l.kernel},           {"stride", l.stride},    {"pad", l.pad},
                {"skip_from", l.skip_from},     {"weight_bits", l.weight_bits},
                {"act_bits", l.act_bits},       {"act_range", l.act_range}};
}

LayerSpec layer_from_json(const json& j) {
    LayerSpec l;
    l.kind = layer_kind_from_string(j.at("kind").get<std::string>());
    l.in_channels = j.at("in").get<int64_t>();
    l.out_channels = j.at("out").get<int64_t>();
    l.kernel = j.at("kernel").get<int>();
    l.stride = j.at("stride").get<int>();
    l.pad = j.at("pad").get<int>();
    l.skip_from = j.at("skip_from").get<int>();
    l.weight_bits = j.at("weight_bits").get<int>();
    l.act_bits = j.at("act_bits").get<int>();
    l.act_range = j.at("act_range").get<float>();
    return l;
}

void put_tensor(std::string& out, const Tensor& t) {
    for (float v : t.values()) {
        auto bits = std::bit_cast<uint32_t>(v);
        char b[4];
        std::memcpy(b, &bits, 4);
        out.append(b, 4);
    }
}

// Shapes every parameter tensor must have, in payload order.
std::vector<std::pair<std::string, Shape>> expected_params(const ModelGraph& m) {
    std::vector<std::pair<std::string, Shape>> out;
    auto add = [&](const std::string& where, const LayerSpec& l) {
        if (!l.has_params()) return;
        Shape w = l.kind == LayerKind::Conv2d ? Shape{l.out_channels, l.in_channels, l.kernel, l.kernel}
                                              : Shape{l.out_channels, l.in_channels};
        out.emplace_back(where + ".weight", w);
        out.emplace_back(where + ".bias", Shape{l.out_channels});
    };
    for (size_t i = 0; i < m.layers.size(); ++i) add("layers." + std::to_string(i), m.layers[i]);
    for (size_t h = 0; h < m.exit_heads.size(); ++h) {
        for (size_t i = 0; i < m.exit_heads[h].layers.size(); ++i) {
            add("heads." + std::to_string(h) + "." + std::to_string(i), m.exit_heads[h].layers[i]);
        }
    }
    return out;
}

}  // namespace

std::string serialize_checkpoint(const ModelGraph& m) {
    json h;
    h["format_version"] = kVersion;
    h["arch"] = m.arch;
    h["width_multiplier"] = m.width_multiplier;
    h["num_classes"] = m.num_classes;
    h["input_shape"] = {m.input_shape.c, m.input_shape.h, m.input_shape.w, m.input_shape.rank};
    h["seed"] = m.seed;
    h["meta"] = m.meta;
    h["residual_groups"] = m.residual_groups;
    h["layers"] = json::array();
    for (const auto& l : m.layers) h["layers"].push_back(layer_to_json(l));
    h["exit_heads"] = json::array();
    for (const auto& head : m.exit_heads) {
        json jh{{"attach_index", head.attach_index}, {"layers", json::array()}};
        for (const auto& l : head.layers) jh["layers"].push_back(layer_to_json(l));
        h["exit_heads"].push_back(jh);
    }
    h["params"] = json::array();
    std::string payload;
    auto emit = [&](const std::string& where, const LayerSpec& l) {
        if (!l.has_params()) return;
        h["params"].push_back({{"name", where + ".weight"}, {"shape", l.weight.shape()}});
        h["params"].push_back({{"name", where + ".bias"}, {"shape", l.bias.shape()}});
        put_tensor(payload, l.weight);
        put_tensor(payload, l.bias);
    };
    for (size_t i = 0; i < m.layers.size(); ++i) emit("layers." + std::to_string(i), m.layers[i]);
    for (size_t hd = 0; hd < m.exit_heads.size(); ++hd) {
        for (size_t i = 0; i < m.exit_heads[hd].layers.size(); ++i) {
            emit("heads." + std::to_string(hd) + "." + std::to_string(i), m.exit_heads[hd].layers[i]);
        }
    }
    const std::string header = h.dump(1);
    return std::string(kMagic) + std::to_string(kVersion) + "\n" + std::to_string(header.size()) + "\n" + header + payload;
}

ModelGraph deserialize_checkpoint(const std::string& bytes) {
    const std::string magic(kMagic);
    if (bytes.compare(0, magic.size(), magic) != 0) throw CheckpointError("not a checkpoint (bad magic bytes)");
    const size_t eol = bytes.find('\n');
    if (eol == std::string::npos) throw CheckpointError("not a checkpoint (unterminated magic line)");
    const std::string version = bytes.substr(magic.size(), eol - magic.size());
    if (version != std::to_string(kVersion)) {
        throw CheckpointError("checkpoint version mismatch: file has v" + version + ", reader supports v" +
                              std::to_string(kVersion));
    }
    const size_t eol2 = bytes.find('\n', eol + 1);
    if (eol2 == std::string::npos) throw CheckpointError("checkpoint truncated inside the header length line");
    size_t header_len = 0;
    try {
        header_len = std::stoull(bytes.substr(eol + 1, eol2 - eol - 1));
    } catch (const std::exception&) {
        throw CheckpointError("checkpoint header length is not a number");
    }
    if (bytes.size() - (eol2 + 1) < header_len) throw CheckpointError("checkpoint truncated inside the header");

    json h;
    try {
        h = json::parse(bytes.substr(eol2 + 1, header_len));
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("checkpoint header is not valid JSON: ") + e.what());
    }

    ModelGraph m;
    std::vector<std::pair<std::string, Shape>> declared;
    try {
        m.arch = h.at("arch").get<std::string>();
        m.width_multiplier = h.at("width_multiplier").get<double>();
        m.num_classes = h.at("num_classes").get<int>();
        const auto in = h.at("input_shape").get<std::vector<int64_t>>();
        if (in.size() != 4) throw CheckpointError("checkpoint input_shape must have 4 entries");
        m.input_shape = ActShape{in[0], in[1], in[2], static_cast<int>(in[3])};
        m.seed = h.at("seed").get<uint64_t>();
        m.meta = h.at("meta").get<std::map<std::string, std::string>>();
        m.residual_groups = h.at("residual_groups").get<std::vector<std::vector<int>>>();
        for (const auto& jl : h.at("layers")) m.layers.push_back(layer_from_json(jl));
        for (const auto& jh : h.at("exit_heads")) {
            ExitHead head;
            head.attach_index = jh.at("attach_index").get<int>();
            for (const auto& jl : jh.at("layers")) head.layers.push_back(layer_from_json(jl));
            m.exit_heads.push_back(std::move(head));
        }
        for (const auto& p : h.at("params")) {
            declared.emplace_back(p.at("name").get<std::string>(), p.at("shape").get<Shape>());
        }
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("checkpoint header is missing fields: ") + e.what());
    }

    const auto expected = expected_params(m);
    if (declared.size() != expected.size()) {
        throw CheckpointError("checkpoint shape mismatch: header lists " + std::to_string(declared.size()) +
                              " parameter arrays, architecture needs " + std::to_string(expected.size()));
    }
    for (size_t i = 0; i < declared.size(); ++i) {
        if (declared[i] != expected[i]) {
            throw CheckpointError("checkpoint shape mismatch at " + expected[i].first + ": header " +
                                  shape_str(declared[i].second) + ", architecture " + shape_str(expected[i].second));
        }
    }

    size_t at = eol2 + 1 + header_len;
    size_t arrays_read = 0;
    auto take = [&](Tensor& t, const Shape& shape) {
        const int64_t n = shape_numel(shape);
        if (bytes.size() - at < static_cast<size_t>(n) * 4) {
            throw CheckpointError("checkpoint truncated: payload holds " + std::to_string(arrays_read) + " of " +
                                  std::to_string(declared.size()) + " parameter arrays");
        }
        t = Tensor(shape);
        for (int64_t k = 0; k < n; ++k) {
            uint32_t bits;
            std::memcpy(&bits, bytes.data() + at, 4);
                t[static_cast<size_t>(k)] = std::bit_cast<float>(bits);
            at += 4;
        }
        ++arrays_read;
    };
    size_t p = 0;
    auto fill = [&](LayerSpec& l) {
        if (!l.has_params()) return;
        take(l.weight, declared[p++].second);
        take(l.bias, declared[p++].second);
    };
    for (auto& l : m.layers) fill(l);
    for (auto& head : m.exit_heads) {
        for (auto& l : head.layers) fill(l);
    }
    if (at != bytes.size()) {
        throw CheckpointError("checkpoint has " + std::to_string(bytes.size() - at) + " trailing payload bytes");
    }
    try {
        infer_shapes(m);
        validate_model(m);
    } catch (const Error& e) {
        throw CheckpointError(std::string("checkpoint shape mismatch: ") + e.what());
    }
    return m;
}

void save_checkpoint(const ModelGraph& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write checkpoint '" + path + "'");
    const std::string bytes = serialize_checkpoint(m);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("failed writing checkpoint '" + path + "'");
}

ModelGraph load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open checkpoint '" + path + "'");
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes);
}

}  // namespace ocmp
