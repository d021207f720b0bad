#include "resquant/model_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "resquant/errors.hpp"

namespace resquant {

namespace {

using nlohmann::json;

template <typename T>
void flip_if_big_endian(std::vector<char>& bytes) {
    if constexpr (std::endian::native == std::endian::big) {
        for (std::size_t i = 0; i + sizeof(T) <= bytes.size(); i += sizeof(T))
            std::reverse(bytes.begin() + i, bytes.begin() + i + sizeof(T));
    }
}

void write_blob(const Tensor& t, const std::filesystem::path& file, BlobDtype dtype) {
    std::vector<char> bytes;
    if (dtype == BlobDtype::f64) {
        bytes.resize(t.size() * sizeof(double));
        std::memcpy(bytes.data(), t.data().data(), bytes.size());
        flip_if_big_endian<double>(bytes);
    } else {
        std::vector<float> f(t.size());
        for (std::size_t i = 0; i < t.size(); ++i) f[i] = float(t[i]);
        bytes.resize(f.size() * sizeof(float));
        std::memcpy(bytes.data(), f.data(), bytes.size());
        flip_if_big_endian<float>(bytes);
    }
    std::ofstream out(file, std::ios::binary);
    if (!out) throw IoError("cannot write blob file " + file.string());
    out.write(bytes.data(), (std::streamsize)bytes.size());
    if (!out) throw IoError("short write to blob file " + file.string());
}

Tensor read_blob(const std::string& name, const json& meta, const std::filesystem::path& dir) {
    if (!meta.contains("shape") || !meta.contains("file"))
        throw IoError("tensor '" + name + "': manifest entry lacks shape or file");
    const std::vector<std::size_t> shape = meta.at("shape").get<std::vector<std::size_t>>();
    const std::string dtype = meta.value("dtype", "f64");
    if (dtype != "f64" && dtype != "f32")
        throw IoError("tensor '" + name + "': unsupported dtype '" + dtype + "'");
    const std::size_t elem = dtype == "f64" ? sizeof(double) : sizeof(float);

    const std::filesystem::path file = dir / meta.at("file").get<std::string>();
    std::ifstream in(file, std::ios::binary);
    if (!in) throw IoError("tensor '" + name + "': blob file missing: " + file.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());

    const std::size_t expected = shape_volume(shape) * elem;
    if (bytes.size() != expected)
        throw IoError("tensor '" + name + "': blob holds " + std::to_string(bytes.size()) +
                      " bytes but shape " + shape_to_string(shape) + " needs " +
                      std::to_string(expected));

    std::vector<double> data(shape_volume(shape));
    if (dtype == "f64") {
        flip_if_big_endian<double>(bytes);
        std::memcpy(data.data(), bytes.data(), bytes.size());
    } else {
        flip_if_big_endian<float>(bytes);
        std::vector<float> f(data.size());
        std::memcpy(f.data(), bytes.data(), bytes.size());
        for (std::size_t i = 0; i < data.size(); ++i) data[i] = double(f[i]);
    }
    return Tensor(shape, std::move(data));
}

const char* activation_name(Activation kind) {
    switch (kind) {
        case Activation::relu: return "relu";
        case Activation::identity: return "identity";
        case Activation::sigmoid: return "sigmoid";
        case Activation::gelu: return "gelu";
    }
    throw InternalError("unknown activation kind");
}

Activation parse_activation(const std::string& name, std::size_t index) {
    if (name == "relu") return Activation::relu;
    if (name == "identity") return Activation::identity;
    if (name == "sigmoid") return Activation::sigmoid;
    if (name == "gelu") return Activation::gelu;
    throw IoError("unknown activation '" + name + "' at layer " + std::to_string(index));
}

struct TensorWriter {
    json& tensors;
    const std::filesystem::path& dir;
    BlobDtype dtype;

    std::string add(const std::string& name, const Tensor& t) {
        json meta;
        meta["shape"] = t.shape();
        meta["dtype"] = dtype == BlobDtype::f64 ? "f64" : "f32";
        meta["file"] = name + ".bin";
        tensors[name] = meta;
        write_blob(t, dir / (name + ".bin"), dtype);
        return name;
    }
};

} // namespace

void save_model(const Network& net, const std::filesystem::path& dir, BlobDtype dtype) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create container directory " + dir.string());

    json manifest;
    manifest["format_version"] = 1;
    manifest["input_shape"] = net.input_shape();
    json layers = json::array();
    json tensors = json::object();
    TensorWriter writer{tensors, dir, dtype};

    for (std::size_t i = 0; i < net.layers().size(); ++i) {
        const Layer& layer = net.layers()[i];
        const std::string prefix = "layer" + std::to_string(i);
        json entry;
        if (const auto* dense = std::get_if<DenseLayer>(&layer)) {
            entry["kind"] = "dense";
            entry["weights"] = writer.add(prefix + "_weights", dense->weights);
            entry["bias"] =
                dense->bias ? json(writer.add(prefix + "_bias", *dense->bias)) : json(nullptr);
        } else if (const auto* conv = std::get_if<Conv2dLayer>(&layer)) {
            entry["kind"] = "conv2d";
            entry["weights"] = writer.add(prefix + "_weights", conv->weights);
            entry["bias"] =
                conv->bias ? json(writer.add(prefix + "_bias", *conv->bias)) : json(nullptr);
            entry["stride"] = conv->stride;
            entry["padding"] = conv->padding == Padding::same ? "same" : "valid";
        } else if (const auto* bn = std::get_if<BatchNormLayer>(&layer)) {
            entry["kind"] = "batch_norm";
            entry["gamma"] = writer.add(prefix + "_gamma", bn->gamma);
            entry["beta"] = writer.add(prefix + "_beta", bn->beta);
            entry["mean"] = writer.add(prefix + "_mean", bn->mean);
            entry["var"] = writer.add(prefix + "_var", bn->variance);
            entry["epsilon"] = bn->epsilon;
        } else {
            entry["kind"] = "activation";
            entry["activation"] = activation_name(std::get<ActivationLayer>(layer).kind);
        }
        layers.push_back(entry);
    }
    manifest["layers"] = layers;
    manifest["tensors"] = tensors;

    std::ofstream out(dir / "manifest.json");
    if (!out) throw IoError("cannot write manifest to " + dir.string());
    out << manifest.dump(2) << "\n";
}

Network load_model(const std::filesystem::path& dir) {
    const std::filesystem::path manifest_path = dir / "manifest.json";
    std::ifstream in(manifest_path);
    if (!in) throw IoError("no manifest.json in " + dir.string());

    json manifest;
    try {
        in >> manifest;
    } catch (const json::exception& e) {
        throw IoError("malformed manifest.json: " + std::string(e.what()));
    }

    const int version = manifest.value("format_version", -1);
    if (version != 1)
        throw IoError("unsupported container format_version " + std::to_string(version));
    if (!manifest.contains("input_shape") || !manifest.contains("layers"))
        throw IoError("manifest lacks input_shape or layers");

    const json tensors = manifest.value("tensors", json::object());
    auto fetch = [&](const json& ref, std::size_t index) -> Tensor {
        const std::string name = ref.get<std::string>();
        if (!tensors.contains(name))
            throw IoError("layer " + std::to_string(index) + " references tensor '" + name +
                          "' with no manifest entry");
        return read_blob(name, tensors.at(name), dir);
    };
    auto fetch_optional = [&](const json& entry, const char* key,
                              std::size_t index) -> std::optional<Tensor> {
        if (!entry.contains(key) || entry.at(key).is_null()) return std::nullopt;
        return fetch(entry.at(key), index);
    };

    std::vector<Layer> layers;
    const json& layer_list = manifest.at("layers");
    for (std::size_t i = 0; i < layer_list.size(); ++i) {
        const json& entry = layer_list[i];
        const std::string kind = entry.value("kind", "");
        if (kind == "dense") {
            layers.push_back(DenseLayer{fetch(entry.at("weights"), i),
                                        fetch_optional(entry, "bias", i)});
        } else if (kind == "conv2d") {
            const std::string padding = entry.value("padding", "same");
            if (padding != "same" && padding != "valid")
                throw IoError("layer " + std::to_string(i) + ": unknown padding '" + padding +
                              "'");
            layers.push_back(Conv2dLayer{fetch(entry.at("weights"), i),
                                         fetch_optional(entry, "bias", i),
                                         entry.value("stride", 1),
                                         padding == "same" ? Padding::same : Padding::valid});
        } else if (kind == "batch_norm") {
            layers.push_back(BatchNormLayer{fetch(entry.at("gamma"), i),
                                            fetch(entry.at("beta"), i),
                                            fetch(entry.at("mean"), i),
                                            fetch(entry.at("var"), i),
                                            entry.value("epsilon", 1e-5)});
        } else if (kind == "activation") {
            layers.push_back(ActivationLayer{parse_activation(entry.value("activation", ""), i)});
        } else {
            throw IoError("unknown layer kind '" + kind + "' at layer " + std::to_string(i));
        }
    }

    try {
        return Network(std::move(layers),
                       manifest.at("input_shape").get<std::vector<std::size_t>>());
    } catch (const StructureError& e) {
        throw IoError("container describes an invalid network: " + std::string(e.what()));
    }
}

} // namespace resquant
