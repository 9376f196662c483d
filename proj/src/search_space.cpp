#include "graphfm/search_space.hpp"

#include <cmath>
#include <sstream>

#include "graphfm/ssl.hpp"

namespace graphfm {

bool ParamSpec::contains(double v) const {
  switch (kind) {
    case Kind::choice:
      for (double c : choices)
        if (std::abs(c - v) < 1e-12) return true;
      return false;
    case Kind::lin_range:
    case Kind::log_range:
      return v >= lo && v <= hi;
    case Kind::int_range:
      return v >= lo && v <= hi && v == std::floor(v);
  }
  return false;
}

std::string ParamSpec::describe() const {
  std::ostringstream os;
  if (kind == Kind::choice) {
    os << "{";
    for (std::size_t i = 0; i < choices.size(); ++i) {
      if (i) os << ", ";
      os << choices[i];
    }
    os << "}";
  } else {
    os << "[" << lo << ", " << hi << "]";
  }
  return os.str();
}

namespace {

const std::vector<double> kDropGrid = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
const std::vector<double> kDropGridHalf = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
const std::vector<double> kDims = {128, 256, 512, 1024};
const std::vector<double> kMaskGrid = {0.4, 0.5, 0.6, 0.7, 0.8};

ParamSpec choice(std::string name, std::vector<double> c) {
  ParamSpec p;
  p.name = std::move(name);
  p.kind = ParamSpec::Kind::choice;
  p.choices = std::move(c);
  return p;
}
ParamSpec logr(std::string name, double lo, double hi) {
  ParamSpec p;
  p.name = std::move(name);
  p.kind = ParamSpec::Kind::log_range;
  p.lo = lo;
  p.hi = hi;
  return p;
}
ParamSpec linr(std::string name, double lo, double hi) {
  ParamSpec p;
  p.name = std::move(name);
  p.kind = ParamSpec::Kind::lin_range;
  p.lo = lo;
  p.hi = hi;
  return p;
}
ParamSpec intr(std::string name, double lo, double hi) {
  ParamSpec p;
  p.name = std::move(name);
  p.kind = ParamSpec::Kind::int_range;
  p.lo = lo;
  p.hi = hi;
  return p;
}

}  // namespace

const std::vector<ParamSpec>& general_search_space() {
  static const std::vector<ParamSpec> specs = {
      logr("lr", 1e-6, 1e-2),
      logr("weight_decay", 1e-6, 1e-2),
      choice("batch_size", {512, 1024, 2048, 4096, 10000, 20000}),
      choice("decode_channels_lp", kDims),
      choice("decode_layers_lp", {1, 2, 4, 8}),
  };
  return specs;
}

const std::vector<ParamSpec>& method_search_space(MethodId m) {
  static const std::vector<ParamSpec> bgrl = {
      choice("drop_edge_p_1", kDropGrid),
      choice("drop_edge_p_2", kDropGrid),
      choice("drop_feat_p_1", kDropGrid),
      choice("drop_feat_p_2", kDropGrid),
  };
  static const std::vector<ParamSpec> cca = {
      choice("dfr", kDropGrid),
      choice("der", kDropGrid),
      choice("hid_dim", kDims),
  };
  static const std::vector<ParamSpec> gbt = {
      choice("emb_dim", kDims),
      logr("lr_base", 1e-6, 1e-2),
      choice("p_x", kDropGrid),
      choice("p_e", kDropGrid),
  };
  static const std::vector<ParamSpec> gca = {
      choice("num_hidden", kDims),
      choice("drop_edge_rate_1", kDropGrid),
      choice("drop_edge_rate_2", kDropGrid),
      choice("drop_feature_rate_1", kDropGrid),
      choice("drop_feature_rate_2", kDropGrid),
  };
  static const std::vector<ParamSpec> graphmae = {
      choice("num_heads", {1, 2, 4, 8}),
      choice("num_hidden", {256, 512, 1024}),
      choice("attn_drop", kDropGridHalf),
      choice("in_drop", kDropGridHalf),
      choice("negative_slope", kDropGridHalf),
      choice("mask_rate", kMaskGrid),
      choice("drop_edge_rate", {0.0, 0.05, 0.15, 0.20}),
      choice("alpha_l", {1, 2, 3}),
  };
  static const std::vector<ParamSpec> s2gae = {
      choice("dim_hidden", kDims),
      choice("decode_channels", kDims),
      intr("decode_layers", 1, 8),
      choice("mask_ratio", kMaskGrid),
  };
  switch (m) {
    case MethodId::bgrl: return bgrl;
    case MethodId::cca_ssg: return cca;
    case MethodId::gbt: return gbt;
    case MethodId::gca: return gca;
    case MethodId::graphmae: return graphmae;
    case MethodId::s2gae: return s2gae;
  }
  return gbt;
}

const std::vector<ParamSpec>& method_extra_params(MethodId m) {
  static const std::vector<ParamSpec> none = {};
  static const std::vector<ParamSpec> cca = {linr("lambda", 0.0, 100.0)};
  static const std::vector<ParamSpec> bgrl = {linr("ema_decay", 0.0, 1.0),
                                              intr("pred_dim", 1, 8192)};
  static const std::vector<ParamSpec> gca = {linr("tau", 1e-6, 100.0),
                                             choice("adaptive", {0, 1})};
  static const std::vector<ParamSpec> graphmae = {choice("replace_rate", kDropGridHalf)};
  switch (m) {
    case MethodId::cca_ssg: return cca;
    case MethodId::bgrl: return bgrl;
    case MethodId::gca: return gca;
    case MethodId::graphmae: return graphmae;
    default: return none;
  }
}

const ParamSpec* find_param(const std::vector<ParamSpec>& specs, const std::string& name) {
  for (const auto& s : specs)
    if (s.name == name) return &s;
  return nullptr;
}

}  // namespace graphfm
