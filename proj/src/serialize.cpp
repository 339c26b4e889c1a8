#include "gped/serialize.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gped/errors.hpp"
#include "gped/textio.hpp"

namespace gped {

namespace {

constexpr int kModelVersion = 1;

Act act_from_name(const std::string& name) {
  if (name == "relu") return Act::Relu;
  if (name == "softmax") return Act::Softmax;
  if (name == "log_softmax") return Act::LogSoftmax;
  if (name == "exponential") return Act::Exponential;
  if (name == "relu_clamp") return Act::ReluClamp;
  if (name == "softmax_exp") return Act::SoftmaxExp;
  raise(ErrorKind::Format, "unknown activation name '" + name + "'");
}

}  // namespace

std::string model_to_json(const Model& m) {
  std::ostringstream os;
  os << "{\n";
  os << "  \"format\": \"gped-model\",\n";
  os << "  \"version\": " << kModelVersion << ",\n";
  os << "  \"input_shape\": [";
  for (std::size_t i = 0; i < m.spec.input_shape.size(); ++i) {
    if (i) os << ", ";
    os << m.spec.input_shape[i];
  }
  os << "],\n";
  os << "  \"layers\": [\n";
  for (std::size_t i = 0; i < m.spec.layers.size(); ++i) {
    const LayerDesc& layer = m.spec.layers[i];
    os << "    {\"kind\": \"" << layer_kind_name(layer.kind) << "\"";
    switch (layer.kind) {
      case LayerKind::Dense:
        os << ", \"in\": " << layer.in << ", \"out\": " << layer.out
           << ", \"site\": " << layer.multiplier_site;
        break;
      case LayerKind::Conv2D:
        os << ", \"in_channels\": " << layer.in_channels
           << ", \"out_channels\": " << layer.out_channels << ", \"kernel\": " << layer.kernel
           << ", \"stride\": " << layer.stride << ", \"site\": " << layer.multiplier_site;
        break;
      case LayerKind::MaxPool2D:
        os << ", \"pool\": " << layer.pool;
        break;
      case LayerKind::Activation:
        os << ", \"act\": \"" << act_name(layer.act) << "\", \"temperature\": "
           << format_g17(layer.temperature);
        break;
      case LayerKind::Dropout:
        os << ", \"rate\": " << format_g17(layer.rate);
        break;
    }
    os << "}" << (i + 1 < m.spec.layers.size() ? "," : "") << "\n";
  }
  os << "  ],\n";
  os << "  \"params\": [";
  for (std::size_t i = 0; i < m.params.size(); ++i) {
    if (i) os << ", ";
    if (i % 8 == 0) os << "\n    ";
    os << format_g17(m.params[i]);
  }
  os << "\n  ]\n";
  os << "}\n";
  return os.str();
}

Model model_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::Format, std::string("model JSON does not parse: ") + e.what());
  }
  try {
    require(doc.value("format", "") == "gped-model", ErrorKind::Format,
            "model JSON is missing format tag 'gped-model'");
    require(doc.value("version", 0) == kModelVersion, ErrorKind::Format,
            "unsupported model version");
    NetworkSpec spec;
    for (const auto& d : doc.at("input_shape")) {
      spec.input_shape.push_back(d.get<std::size_t>());
    }
    for (const auto& jl : doc.at("layers")) {
      const std::string kind = jl.at("kind").get<std::string>();
      LayerDesc layer;
      if (kind == "dense") {
        layer = LayerDesc::dense(jl.at("in").get<std::size_t>(), jl.at("out").get<std::size_t>(),
                                 jl.value("site", 0));
      } else if (kind == "conv2d") {
        layer = LayerDesc::conv2d(jl.at("in_channels").get<std::size_t>(),
                                  jl.at("out_channels").get<std::size_t>(),
                                  jl.at("kernel").get<std::size_t>(),
                                  jl.value("stride", std::size_t{1}), jl.value("site", 0));
      } else if (kind == "maxpool2d") {
        layer = LayerDesc::maxpool2d(jl.at("pool").get<std::size_t>());
      } else if (kind == "activation") {
        layer = LayerDesc::activation(act_from_name(jl.at("act").get<std::string>()),
                                      jl.value("temperature", 1.0));
      } else if (kind == "dropout") {
        layer = LayerDesc::dropout(jl.at("rate").get<double>());
      } else {
        raise(ErrorKind::Format, "unknown layer kind '" + kind + "'");
      }
      spec.layers.push_back(layer);
    }
    std::vector<double> params;
    const auto& jp = doc.at("params");
    params.reserve(jp.size());
    for (const auto& v : jp) params.push_back(v.get<double>());
    return model_with_params(spec, std::move(params));
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::Format, std::string("model JSON is missing fields: ") + e.what());
  }
}

void save_model(const Model& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::Format, "cannot open '" + path + "' for writing");
  out << model_to_json(m);
  require(out.good(), ErrorKind::Format, "failed writing model to '" + path + "'");
}

Model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::Format, "cannot open model file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return model_from_json(buf.str());
}

}  // namespace gped
