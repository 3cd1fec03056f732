#include "memvi/model_io.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "memvi/memory.hpp"

namespace memvi {
namespace {

constexpr const char* kMagic = "memvi-model 1";

template <class T, class F>
std::string join(const std::vector<T>& items, F&& fmt) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += ',';
        out += fmt(items[i]);
    }
    return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) parts.push_back(item);
    return parts;
}

void write_layers(std::ostream& out, const std::vector<Layer>& layers, const std::vector<std::size_t>& dims) {
    out << "layers=" << layers.size() << " dims=" << join(dims, [](std::size_t d) { return std::to_string(d); })
        << " activations=" << join(layers, [](const Layer& l) { return std::string(to_string(l.activation)); })
        << '\n';
    for (const auto& layer : layers) {
        out << format_vector(Vector(layer.weight.data())) << '\n';
        out << format_vector(layer.bias) << '\n';
    }
}

class LineReader {
public:
    explicit LineReader(std::istream& in) : in_(in) {}

    bool next(std::string& line) {
        while (std::getline(in_, line)) {
            ++number_;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (!line.empty()) return true;
        }
        return false;
    }
    std::string require(const char* what) {
        std::string line;
        if (!next(line)) fail(std::string("unexpected end of file, expected ") + what);
        return line;
    }
    [[noreturn]] void fail(const std::string& msg) const {
        throw std::invalid_argument("model file line " + std::to_string(number_) + ": " + msg);
    }

private:
    std::istream& in_;
    std::size_t number_ = 0;
};

// Reads a header plus weight/bias lines. Decoder dims list layer l's output
// before its input; encoder dims are in application order.
std::vector<Layer> read_layers(LineReader& reader, bool decoder_order) {
    const std::string header = reader.require("layer header");
    std::size_t count = 0;
    std::string dims_s, acts_s;
    for (const auto& field : split(header, ' ')) {
        const auto eq = field.find('=');
        if (eq == std::string::npos) reader.fail("malformed header field '" + field + "'");
        const std::string key = field.substr(0, eq);
        const std::string value = field.substr(eq + 1);
        if (key == "layers") count = std::stoul(value);
        else if (key == "dims") dims_s = value;
        else if (key == "activations") acts_s = value;
        else reader.fail("unknown header field '" + key + "'");
    }
    std::vector<std::size_t> dims;
    for (const auto& d : split(dims_s, ',')) dims.push_back(std::stoul(d));
    const auto acts = split(acts_s, ',');
    if (count == 0 || dims.size() != count + 1 || acts.size() != count) {
        reader.fail("header '" + header + "' is inconsistent");
    }

    std::vector<Layer> layers;
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t out = decoder_order ? dims[i] : dims[i + 1];
        const std::size_t in = decoder_order ? dims[i + 1] : dims[i];
        const std::string shape = std::to_string(out) + "x" + std::to_string(in);
        Vector w = parse_vector(reader.require("weights"));
        if (w.dim() != out * in) {
            reader.fail("layer " + std::to_string(i) + " expects " + shape + " weights, got " + std::to_string(w.dim()));
        }
        Vector b = parse_vector(reader.require("bias"));
        if (b.dim() != out) {
            reader.fail("layer " + std::to_string(i) + " expects " + std::to_string(out) + " biases, got " +
                        std::to_string(b.dim()));
        }
        layers.push_back(Layer{Matrix(out, in, std::vector<double>(w.begin(), w.end())), std::move(b),
                               parse_activation(acts[i])});
    }
    return layers;
}

}  // namespace

void save_model(std::ostream& out, const ModelFile& model) {
    out << kMagic << '\n';
    if (model.vae) {
        const VaeModel& vae = *model.vae;
        vae.validate();
        std::vector<std::size_t> dec_dims;
        for (std::size_t l = 0; l <= vae.decoder.depth(); ++l) dec_dims.push_back(vae.decoder.dim(l));
        out << "decoder\n";
        write_layers(out, vae.decoder.layers(), dec_dims);

        std::vector<std::size_t> enc_dims{vae.encoder.input_dim()};
        for (const auto& layer : vae.encoder.layers) enc_dims.push_back(layer.out_dim());
        out << "encoder\n";
        write_layers(out, vae.encoder.layers, enc_dims);
    }
    if (model.precision_raw) out << "precision_raw= " << format_vector(*model.precision_raw) << '\n';
}

ModelFile load_model(std::istream& in) {
    LineReader reader(in);
    if (reader.require("header") != kMagic) reader.fail(std::string("expected '") + kMagic + "'");
    ModelFile model;
    std::optional<LayerStack> decoder;
    std::optional<Encoder> encoder;
    std::string line;
    while (reader.next(line)) {
        if (line == "decoder") {
            decoder = LayerStack(read_layers(reader, true));
        } else if (line == "encoder") {
            encoder = Encoder{read_layers(reader, false)};
        } else if (line.rfind("precision_raw=", 0) == 0) {
            model.precision_raw = parse_vector(line.substr(std::string("precision_raw=").size()));
        } else {
            reader.fail("unexpected line '" + line + "'");
        }
    }
    if (decoder.has_value() != encoder.has_value()) reader.fail("decoder and encoder must both be present");
    if (decoder) {
        model.vae = VaeModel{std::move(*encoder), std::move(*decoder)};
        model.vae->validate();
    }
    return model;
}

void save_model(const std::filesystem::path& path, const ModelFile& model) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write model file " + path.string());
    save_model(out, model);
    if (!out) throw std::runtime_error("failed writing model file " + path.string());
}

ModelFile load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open model file " + path.string());
    return load_model(in);
}

}  // namespace memvi
