#include "graphfm/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "graphfm/search_space.hpp"

namespace graphfm {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  fs::create_directories(fs::path(path).parent_path().empty() ? "." : fs::path(path).parent_path().string());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path);
  out << content;
}

}  // namespace

// ---------------------------------------------------------------------------
// Dataset directory
// ---------------------------------------------------------------------------

DatasetBundle load_dataset(const std::string& dir) {
  const fs::path root(dir);
  if (!fs::is_directory(root)) throw DataError("dataset directory not found: " + dir);

  json meta;
  try {
    meta = json::parse(read_file((root / "meta.json").string()));
  } catch (const json::exception& e) {
    throw DataError("malformed meta.json: " + std::string(e.what()));
  }
  DatasetBundle data;
  try {
    data.name = meta.at("name").get<std::string>();
    data.num_classes = meta.at("num_classes").get<i64>();
  } catch (const json::exception& e) {
    throw DataError("meta.json missing field: " + std::string(e.what()));
  }
  const i64 n = meta.at("num_nodes").get<i64>();
  const i64 m = meta.at("num_edges").get<i64>();
  const i64 d = meta.at("feat_dim").get<i64>();
  if (n < 1 || d < 1 || data.num_classes < 1 || m < 0)
    throw DataError("meta.json: counts must be positive");

  // edges.csv
  {
    std::ifstream in(root / "edges.csv");
    if (!in) throw DataError("missing edges.csv");
    EdgeList edges;
    std::string line;
    i64 row = 0;
    while (std::getline(in, line)) {
      ++row;
      if (line.empty()) continue;
      std::replace(line.begin(), line.end(), ',', ' ');
      std::istringstream ls(line);
      i64 u, v;
      if (!(ls >> u >> v)) throw DataError("edges.csv row " + std::to_string(row) + ": malformed");
      if (u < 0 || u >= n || v < 0 || v >= n)
        throw DataError("edges.csv row " + std::to_string(row) + ": node id out of range");
      edges.emplace_back(u, v);
    }
    data.graph = build_csr(edges, n);
    if (data.graph.num_edges != m)
      throw DataError("meta.json num_edges=" + std::to_string(m) + " but edges.csv holds " +
                      std::to_string(data.graph.num_edges) + " unique undirected edges");
  }

  // features.bin
  {
    const std::string raw = read_file((root / "features.bin").string());
    if (i64(raw.size()) != n * d * 4)
      throw DataError("features.bin size mismatch: expected " + std::to_string(n * d * 4) +
                      " bytes, found " + std::to_string(raw.size()));
    data.features = Matrix(n, d);
    const auto* p = reinterpret_cast<const unsigned char*>(raw.data());
    for (i64 i = 0; i < n * d; ++i) {
      std::uint32_t bits = std::uint32_t(p[4 * i]) | (std::uint32_t(p[4 * i + 1]) << 8) |
                           (std::uint32_t(p[4 * i + 2]) << 16) | (std::uint32_t(p[4 * i + 3]) << 24);
      float f;
      static_assert(sizeof(f) == 4);
      std::memcpy(&f, &bits, 4);
      data.features.data[std::size_t(i)] = double(f);
    }
  }

  // labels.csv
  {
    std::ifstream in(root / "labels.csv");
    if (!in) throw DataError("missing labels.csv");
    std::string line;
    i64 row = 0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      ++row;
      i64 y;
      try {
        y = std::stoll(line);
      } catch (const std::exception&) {
        throw DataError("labels.csv row " + std::to_string(row) + ": malformed");
      }
      if (y < 0 || y >= data.num_classes)
        throw DataError("labels.csv row " + std::to_string(row) + ": label out of range");
      data.labels.push_back(y);
    }
    if (i64(data.labels.size()) != n)
      throw DataError("labels.csv holds " + std::to_string(data.labels.size()) +
                      " rows, expected " + std::to_string(n));
  }

  // splits.json (optional)
  if (fs::exists(root / "splits.json")) {
    json sp;
    try {
      sp = json::parse(read_file((root / "splits.json").string()));
    } catch (const json::exception& e) {
      throw DataError("malformed splits.json: " + std::string(e.what()));
    }
    auto fill = [&](const char* key, std::vector<std::uint8_t>& mask) {
      mask.assign(std::size_t(n), 0);
      for (i64 v : sp.at(key).get<std::vector<i64>>()) {
        if (v < 0 || v >= n) throw DataError("splits.json: index out of range in " + std::string(key));
        mask[std::size_t(v)] = 1;
      }
    };
    fill("train", data.splits.train_mask);
    fill("val", data.splits.val_mask);
    fill("test", data.splits.test_mask);
  }
  return data;
}

void save_dataset(const DatasetBundle& data, const std::string& dir) {
  fs::create_directories(dir);
  const fs::path root(dir);
  ordered_json meta;
  meta["name"] = data.name;
  meta["num_nodes"] = data.graph.num_nodes;
  meta["num_edges"] = data.graph.num_edges;
  meta["feat_dim"] = data.features.cols;
  meta["num_classes"] = data.num_classes;
  write_file((root / "meta.json").string(), meta.dump(2) + "\n");

  {
    std::ostringstream ss;
    for (const auto& [u, v] : data.graph.edges()) ss << u << "," << v << "\n";
    write_file((root / "edges.csv").string(), ss.str());
  }
  {
    std::string raw(std::size_t(data.features.size()) * 4, '\0');
    auto* p = reinterpret_cast<unsigned char*>(raw.data());
    for (i64 i = 0; i < data.features.size(); ++i) {
      const float f = float(data.features.data[std::size_t(i)]);
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      p[4 * i] = bits & 0xff;
      p[4 * i + 1] = (bits >> 8) & 0xff;
      p[4 * i + 2] = (bits >> 16) & 0xff;
      p[4 * i + 3] = (bits >> 24) & 0xff;
    }
    write_file((root / "features.bin").string(), raw);
  }
  {
    std::ostringstream ss;
    for (i64 y : data.labels) ss << y << "\n";
    write_file((root / "labels.csv").string(), ss.str());
  }
  if (data.splits.has_node_split()) {
    ordered_json sp;
    auto indices = [&](const std::vector<std::uint8_t>& mask) {
      std::vector<i64> out;
      for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) out.push_back(i64(i));
      return out;
    };
    sp["train"] = indices(data.splits.train_mask);
    sp["val"] = indices(data.splits.val_mask);
    sp["test"] = indices(data.splits.test_mask);
    write_file((root / "splits.json").string(), sp.dump(2) + "\n");
  }
}

void ensure_splits(DatasetBundle& data, const ExperimentConfig& cfg) {
  if (!data.splits.has_node_split())
    split_nodes(data.splits, data.graph.num_nodes, cfg.node_train_ratio, cfg.node_val_ratio,
                cfg.node_test_ratio, splitmix64(cfg.split_seed ^ 0xa11ceULL));
  if (!data.splits.has_lp_split())
    split_edges_lp(data.splits, data.graph, cfg.lp_val_frac, cfg.lp_test_frac,
                   splitmix64(cfg.split_seed ^ 0xed6e5ULL));
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

template <typename T>
void put_le(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(char((u64(v) >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(const std::string& s, std::size_t& pos) {
  if (pos + sizeof(T) > s.size()) throw DataError("checkpoint: truncated file");
  u64 v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i)
    v |= u64(static_cast<unsigned char>(s[pos + i])) << (8 * i);
  pos += sizeof(T);
  return T(v);
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::string out = "GFMC";
  put_le<std::uint32_t>(out, 1);
  put_le<std::uint32_t>(out, std::uint32_t(ckpt.params.size()));
  for (const auto& [name, mat] : ckpt.params) {
    put_le<std::uint32_t>(out, std::uint32_t(name.size()));
    out += name;
    put_le<u64>(out, u64(mat.rows));
    put_le<u64>(out, u64(mat.cols));
    for (double v : mat.data) {
      u64 bits;
      std::memcpy(&bits, &v, 8);
      put_le<u64>(out, bits);
    }
  }
  write_file(path, out);
}

Checkpoint load_checkpoint(const std::string& path) {
  const std::string s = read_file(path);
  if (s.size() < 4 || s.compare(0, 4, "GFMC") != 0)
    throw DataError("checkpoint: bad magic in " + path);
  std::size_t pos = 4;
  const auto version = get_le<std::uint32_t>(s, pos);
  if (version != 1) throw DataError("checkpoint: unsupported version " + std::to_string(version));
  const auto count = get_le<std::uint32_t>(s, pos);
  Checkpoint ckpt;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = get_le<std::uint32_t>(s, pos);
    if (pos + name_len > s.size()) throw DataError("checkpoint: truncated name");
    std::string name = s.substr(pos, name_len);
    pos += name_len;
    const i64 rows = i64(get_le<u64>(s, pos));
    const i64 cols = i64(get_le<u64>(s, pos));
    if (rows < 0 || cols < 0 || rows * cols > i64(1) << 32)
      throw DataError("checkpoint: implausible shape for '" + name + "'");
    Matrix mat(rows, cols);
    for (i64 j = 0; j < rows * cols; ++j) {
      const u64 bits = get_le<u64>(s, pos);
      double v;
      std::memcpy(&v, &bits, 8);
      mat.data[std::size_t(j)] = v;
    }
    ckpt.params.emplace_back(std::move(name), std::move(mat));
  }
  if (pos != s.size()) throw DataError("checkpoint: trailing bytes");
  return ckpt;
}

// ---------------------------------------------------------------------------
// Experiment configuration (INI-style)
// ---------------------------------------------------------------------------

namespace {

struct IniData {
  // section -> ordered (key, value) pairs
  std::vector<std::pair<std::string, std::vector<std::pair<std::string, std::string>>>> sections;

  std::vector<std::pair<std::string, std::string>>& section(const std::string& name) {
    for (auto& [s, kv] : sections)
      if (s == name) return kv;
    sections.emplace_back(name, std::vector<std::pair<std::string, std::string>>{});
    return sections.back().second;
  }
};

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

IniData parse_ini(const std::string& text) {
  IniData ini;
  std::string current = "run";
  std::istringstream in(text);
  std::string line;
  i64 lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError("config line " + std::to_string(lineno) + ": unterminated section header");
      current = trim(t.substr(1, t.size() - 2));
      ini.section(current);
      continue;
    }
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    ini.section(current).emplace_back(key, value);
  }
  return ini;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  }
}

i64 to_int(const std::string& key, const std::string& v) {
  const double d = to_double(key, v);
  if (d != std::floor(d)) throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
  return i64(d);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : v) {
    if (c == ',') {
      if (!trim(cur).empty()) out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!trim(cur).empty()) out.push_back(trim(cur));
  return out;
}

std::string fmt_double(double v) {
  if (v == std::floor(v) && std::abs(v) < 1e15) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%lld", static_cast<long long>(v));
    return buf;
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  const IniData ini = parse_ini(text);
  ExperimentConfig cfg;

  // Method identity first: defaults depend on it.
  for (const auto& [sec, kvs] : ini.sections)
    if (sec == "method")
      for (const auto& [k, v] : kvs)
        if (k == "name") cfg.settings.method = default_method_config(method_from_name(v));
  if (cfg.settings.method.hp.empty() && cfg.settings.method.encoder.hidden_dims.empty())
    cfg.settings.method = default_method_config(cfg.settings.method.id);

  for (const auto& [sec, kvs] : ini.sections) {
    if (sec == "run") {
      for (const auto& [k, v] : kvs) {
        if (k == "dataset") cfg.dataset_dir = v;
        else if (k == "out") cfg.out_dir = v;
        else if (k == "strategy") cfg.settings.sampler.strategy = strategy_from_name(v);
        else if (k == "criterion") cfg.settings.criterion = criterion_from_name(v);
        else if (k == "seeds") {
          cfg.seeds.clear();
          for (const auto& s : split_list(v)) cfg.seeds.push_back(u64(to_int("seeds", s)));
          if (cfg.seeds.empty()) throw ConfigError("config key 'seeds': empty list");
        } else if (k == "num_steps") cfg.settings.num_steps = to_int(k, v);
        else if (k == "eval_every") cfg.settings.eval_every = to_int(k, v);
        else if (k == "patience") cfg.settings.patience = to_int(k, v);
        else if (k == "node_train_ratio") cfg.node_train_ratio = to_double(k, v);
        else if (k == "node_val_ratio") cfg.node_val_ratio = to_double(k, v);
        else if (k == "node_test_ratio") cfg.node_test_ratio = to_double(k, v);
        else if (k == "lp_val_frac") cfg.lp_val_frac = to_double(k, v);
        else if (k == "lp_test_frac") cfg.lp_test_frac = to_double(k, v);
        else if (k == "split_seed") cfg.split_seed = u64(to_int(k, v));
        else throw ConfigError("unknown config key '" + k + "' in section [run]");
      }
    } else if (sec == "method") {
      for (const auto& [k, v] : kvs) {
        if (k == "name") continue;
        else if (k == "lr") cfg.settings.method.lr = to_double(k, v);
        else if (k == "weight_decay") cfg.settings.method.weight_decay = to_double(k, v);
        else throw ConfigError("unknown config key '" + k + "' in section [method]");
      }
    } else if (sec == "method.hp") {
      for (const auto& [k, v] : kvs) cfg.settings.method.hp[k] = to_double(k, v);
    } else if (sec == "encoder") {
      for (const auto& [k, v] : kvs) {
        EncoderConfig& e = cfg.settings.method.encoder;
        if (k == "kind") e.kind = encoder_kind_from_name(v);
        else if (k == "activation") e.activation = activation_from_name(v);
        else if (k == "num_layers") e.num_layers = to_int(k, v);
        else if (k == "hidden_dims") {
          e.hidden_dims.clear();
          for (const auto& s : split_list(v)) e.hidden_dims.push_back(to_int("hidden_dims", s));
        } else if (k == "num_heads") e.num_heads = to_int(k, v);
        else if (k == "attn_drop") e.attn_drop = to_double(k, v);
        else if (k == "in_drop") e.in_drop = to_double(k, v);
        else if (k == "negative_slope") e.negative_slope = to_double(k, v);
        else throw ConfigError("unknown config key '" + k + "' in section [encoder]");
      }
    } else if (sec == "sampler") {
      for (const auto& [k, v] : kvs) {
        SamplerConfig& s = cfg.settings.sampler;
        if (k == "batch_size") s.batch_size = to_int(k, v);
        else if (k == "fanouts") {
          s.fanouts.clear();
          for (const auto& f : split_list(v)) s.fanouts.push_back(to_int("fanouts", f));
        } else if (k == "num_clusters") s.num_clusters = to_int(k, v);
        else if (k == "clusters_per_batch") s.clusters_per_batch = to_int(k, v);
        else if (k == "seed") s.seed = u64(to_int(k, v));
        else throw ConfigError("unknown config key '" + k + "' in section [sampler]");
      }
    } else if (sec == "probe") {
      for (const auto& [k, v] : kvs) {
        ProbeConfig& p = cfg.settings.final_probe;
        if (k == "hidden_dim") p.hidden_dim = to_int(k, v);
        else if (k == "num_layers") p.num_layers = to_int(k, v);
        else if (k == "lr") p.lr = to_double(k, v);
        else if (k == "weight_decay") p.weight_decay = to_double(k, v);
        else if (k == "dropout") p.dropout = to_double(k, v);
        else if (k == "epochs") p.epochs = to_int(k, v);
        else if (k == "patience") p.patience = to_int(k, v);
        else throw ConfigError("unknown config key '" + k + "' in section [probe]");
      }
    } else if (sec == "link") {
      for (const auto& [k, v] : kvs) {
        LinkDecoderConfig& l = cfg.settings.final_link;
        if (k == "channels") l.channels = to_int(k, v);
        else if (k == "num_layers") l.num_layers = to_int(k, v);
        else if (k == "lr") l.lr = to_double(k, v);
        else if (k == "weight_decay") l.weight_decay = to_double(k, v);
        else if (k == "epochs") l.epochs = to_int(k, v);
        else if (k == "patience") l.patience = to_int(k, v);
        else throw ConfigError("unknown config key '" + k + "' in section [link]");
      }
    } else {
      throw ConfigError("unknown config section [" + sec + "]");
    }
  }

  if (cfg.settings.num_steps < 1) throw ConfigError("num_steps must be >= 1");
  if (cfg.settings.eval_every < 1) throw ConfigError("eval_every must be >= 1");
  if (cfg.settings.patience < 1) throw ConfigError("patience must be >= 1");
  if (cfg.settings.final_probe.epochs < 1) throw ConfigError("probe epochs must be >= 1");
  // Range-check method hyperparameters now so bad configs fail at parse time.
  {
    MethodConfig check = cfg.settings.method;
    check.finalize(1);
  }
  return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
  return parse_config_text(read_file(path));
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << "[run]\n";
  os << "dataset = " << cfg.dataset_dir << "\n";
  os << "out = " << cfg.out_dir << "\n";
  os << "strategy = " << strategy_name(cfg.settings.sampler.strategy) << "\n";
  os << "criterion = " << criterion_name(cfg.settings.criterion) << "\n";
  os << "seeds = ";
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i) os << (i ? "," : "") << cfg.seeds[i];
  os << "\n";
  os << "num_steps = " << cfg.settings.num_steps << "\n";
  os << "eval_every = " << cfg.settings.eval_every << "\n";
  os << "patience = " << cfg.settings.patience << "\n";
  os << "node_train_ratio = " << fmt_double(cfg.node_train_ratio) << "\n";
  os << "node_val_ratio = " << fmt_double(cfg.node_val_ratio) << "\n";
  os << "node_test_ratio = " << fmt_double(cfg.node_test_ratio) << "\n";
  os << "lp_val_frac = " << fmt_double(cfg.lp_val_frac) << "\n";
  os << "lp_test_frac = " << fmt_double(cfg.lp_test_frac) << "\n";
  os << "split_seed = " << cfg.split_seed << "\n";
  os << "\n[method]\n";
  os << "name = " << method_name(cfg.settings.method.id) << "\n";
  os << "lr = " << fmt_double(cfg.settings.method.lr) << "\n";
  os << "weight_decay = " << fmt_double(cfg.settings.method.weight_decay) << "\n";
  os << "\n[method.hp]\n";
  for (const auto& [k, v] : cfg.settings.method.hp) os << k << " = " << fmt_double(v) << "\n";
  const EncoderConfig& e = cfg.settings.method.encoder;
  os << "\n[encoder]\n";
  os << "kind = " << encoder_kind_name(e.kind) << "\n";
  os << "activation = " << activation_name(e.activation) << "\n";
  os << "num_layers = " << e.num_layers << "\n";
  if (!e.hidden_dims.empty()) {
    os << "hidden_dims = ";
    for (std::size_t i = 0; i < e.hidden_dims.size(); ++i) os << (i ? "," : "") << e.hidden_dims[i];
    os << "\n";
  }
  os << "num_heads = " << e.num_heads << "\n";
  os << "attn_drop = " << fmt_double(e.attn_drop) << "\n";
  os << "in_drop = " << fmt_double(e.in_drop) << "\n";
  os << "negative_slope = " << fmt_double(e.negative_slope) << "\n";
  const SamplerConfig& s = cfg.settings.sampler;
  os << "\n[sampler]\n";
  os << "batch_size = " << s.batch_size << "\n";
  if (!s.fanouts.empty()) {
    os << "fanouts = ";
    for (std::size_t i = 0; i < s.fanouts.size(); ++i) os << (i ? "," : "") << s.fanouts[i];
    os << "\n";
  }
  os << "num_clusters = " << s.num_clusters << "\n";
  os << "clusters_per_batch = " << s.clusters_per_batch << "\n";
  os << "seed = " << s.seed << "\n";
  const ProbeConfig& p = cfg.settings.final_probe;
  os << "\n[probe]\n";
  os << "hidden_dim = " << p.hidden_dim << "\n";
  os << "num_layers = " << p.num_layers << "\n";
  os << "lr = " << fmt_double(p.lr) << "\n";
  os << "weight_decay = " << fmt_double(p.weight_decay) << "\n";
  os << "dropout = " << fmt_double(p.dropout) << "\n";
  os << "epochs = " << p.epochs << "\n";
  os << "patience = " << p.patience << "\n";
  const LinkDecoderConfig& l = cfg.settings.final_link;
  os << "\n[link]\n";
  os << "channels = " << l.channels << "\n";
  os << "num_layers = " << l.num_layers << "\n";
  os << "lr = " << fmt_double(l.lr) << "\n";
  os << "weight_decay = " << fmt_double(l.weight_decay) << "\n";
  os << "epochs = " << l.epochs << "\n";
  os << "patience = " << l.patience << "\n";
  return os.str();
}

u64 config_hash(const ExperimentConfig& cfg) {
  const std::string canon = serialize_config(cfg);
  u64 h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canon) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<u64> parse_seed_list(const std::string& s) {
  std::vector<u64> out;
  for (const auto& tok : split_list(s)) {
    const i64 v = to_int("seeds", tok);
    if (v < 0) throw ConfigError("seed values must be non-negative");
    out.push_back(u64(v));
  }
  if (out.empty()) throw ConfigError("seed list is empty");
  return out;
}

void apply_cli_overrides(ExperimentConfig& cfg, const CliOverrides& o) {
  if (!o.method.empty()) {
    const MethodId id = method_from_name(o.method);
    if (id != cfg.settings.method.id) cfg.settings.method = default_method_config(id);
  }
  if (!o.dataset.empty()) cfg.dataset_dir = o.dataset;
  if (!o.strategy.empty()) cfg.settings.sampler.strategy = strategy_from_name(o.strategy);
  if (!o.criterion.empty()) cfg.settings.criterion = criterion_from_name(o.criterion);
  if (!o.seeds.empty()) cfg.seeds = parse_seed_list(o.seeds);
  if (!o.out.empty()) cfg.out_dir = o.out;
}

std::string manifest_to_json(const RunManifest& m) {
  ordered_json j;
  j["run_id"] = m.run_id;
  char hash[32];
  std::snprintf(hash, sizeof(hash), "%016llx", static_cast<unsigned long long>(m.config_hash));
  j["config_hash"] = hash;
  j["tool_version"] = m.tool_version;
  j["started_at"] = m.started_at;
  j["finished_at"] = m.finished_at;
  j["dataset"] = {{"num_nodes", m.num_nodes},
                  {"num_edges", m.num_edges},
                  {"feat_dim", m.feat_dim},
                  {"num_classes", m.num_classes}};
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Results emission
// ---------------------------------------------------------------------------

namespace {

std::string fmt_metric(const std::optional<double>& v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", *v);
  return buf;
}

const char* kHeader = "dataset,method,strategy,criterion,seed,acc,auc,ap,nmi,ari,act_mem_mb,throughput_it_s,best_epoch";

}  // namespace

std::string results_csv(const std::vector<ResultsRow>& rows) {
  std::ostringstream os;
  os << kHeader << "\n";
  for (const auto& r : rows) {
    os << r.dataset << "," << r.method << "," << r.strategy << "," << r.criterion << "," << r.seed
       << "," << fmt_metric(r.acc) << "," << fmt_metric(r.auc) << "," << fmt_metric(r.ap) << ","
       << fmt_metric(r.nmi) << "," << fmt_metric(r.ari) << "," << fmt_metric(r.act_mem_mb) << ","
       << fmt_metric(r.throughput_it_s) << ",";
    if (r.best_epoch) os << *r.best_epoch;
    os << "\n";
  }
  return os.str();
}

std::string results_json(const std::vector<ResultsRow>& rows) {
  ordered_json arr = ordered_json::array();
  auto put = [](ordered_json& j, const char* k, const std::optional<double>& v) {
    if (v)
      j[k] = *v;
    else
      j[k] = nullptr;
  };
  for (const auto& r : rows) {
    ordered_json j;
    j["dataset"] = r.dataset;
    j["method"] = r.method;
    j["strategy"] = r.strategy;
    j["criterion"] = r.criterion;
    j["seed"] = r.seed;
    put(j, "acc", r.acc);
    put(j, "auc", r.auc);
    put(j, "ap", r.ap);
    put(j, "nmi", r.nmi);
    put(j, "ari", r.ari);
    put(j, "act_mem_mb", r.act_mem_mb);
    put(j, "throughput_it_s", r.throughput_it_s);
    if (r.best_epoch)
      j["best_epoch"] = *r.best_epoch;
    else
      j["best_epoch"] = nullptr;
    arr.push_back(std::move(j));
  }
  return arr.dump(2) + "\n";
}

namespace {

struct GroupKey {
  std::string dataset, method, strategy;
  bool operator==(const GroupKey& o) const {
    return dataset == o.dataset && method == o.method && strategy == o.strategy;
  }
};

std::string mean_std_str(const std::vector<double>& vals) {
  AggregateStats st = aggregate_seeds(vals);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f±%.2f", st.mean, st.stddev);
  return buf;
}

}  // namespace

std::string results_summary(const std::vector<ResultsRow>& rows) {
  std::vector<GroupKey> order;
  std::vector<std::map<std::string, std::vector<double>>> groups;
  for (const auto& r : rows) {
    GroupKey key{r.dataset, r.method, r.strategy};
    std::size_t gi = order.size();
    for (std::size_t i = 0; i < order.size(); ++i)
      if (order[i] == key) gi = i;
    if (gi == order.size()) {
      order.push_back(key);
      groups.emplace_back();
    }
    auto add = [&](const char* name, const std::optional<double>& v) {
      if (v) groups[gi][name].push_back(*v);
    };
    add("acc", r.acc);
    add("auc", r.auc);
    add("ap", r.ap);
    add("nmi", r.nmi);
    add("ari", r.ari);
  }
  std::ostringstream os;
  for (std::size_t i = 0; i < order.size(); ++i) {
    os << order[i].dataset << " / " << order[i].method << " / " << order[i].strategy << ":";
    for (const char* m : {"acc", "auc", "ap", "nmi", "ari"}) {
      auto it = groups[i].find(m);
      if (it != groups[i].end()) os << " " << m << "=" << mean_std_str(it->second);
    }
    os << "\n";
  }
  return os.str();
}

void emit_results(const std::vector<ResultsRow>& rows, const std::string& out_dir) {
  if (rows.empty()) throw DataError("emit_results: no rows");
  fs::create_directories(out_dir);
  write_file((fs::path(out_dir) / "results.csv").string(), results_csv(rows));
  write_file((fs::path(out_dir) / "results.json").string(), results_json(rows));
  write_file((fs::path(out_dir) / "summary.txt").string(), results_summary(rows));
}

void emit_plots(const std::vector<ResultsRow>& rows, const std::string& out_dir) {
  if (rows.empty()) throw DataError("emit_plots: no rows");
  fs::create_directories(out_dir);
  std::vector<std::string> datasets;
  for (const auto& r : rows)
    if (std::find(datasets.begin(), datasets.end(), r.dataset) == datasets.end())
      datasets.push_back(r.dataset);

  struct Bar {
    std::string label;
    double mean, stddev;
  };
  auto metric_of = [](const ResultsRow& r, const std::string& m) -> std::optional<double> {
    if (m == "acc") return r.acc;
    if (m == "auc") return r.auc;
    if (m == "ap") return r.ap;
    if (m == "nmi") return r.nmi;
    return r.ari;
  };
  for (const auto& ds : datasets) {
    for (const char* metric : {"acc", "auc", "ap", "nmi", "ari"}) {
      std::vector<std::string> labels;
      std::vector<std::vector<double>> vals;
      for (const auto& r : rows) {
        if (r.dataset != ds) continue;
        const auto v = metric_of(r, metric);
        if (!v) continue;
        const std::string label = r.method + "/" + r.strategy;
        auto it = std::find(labels.begin(), labels.end(), label);
        std::size_t gi;
        if (it == labels.end()) {
          gi = labels.size();
          labels.push_back(label);
          vals.emplace_back();
        } else {
          gi = std::size_t(it - labels.begin());
        }
        vals[gi].push_back(*v);
      }
      if (labels.empty()) continue;
      std::vector<Bar> bars;
      double vmax = 0.0;
      for (std::size_t i = 0; i < labels.size(); ++i) {
        AggregateStats st = aggregate_seeds(vals[i]);
        bars.push_back({labels[i], st.mean, st.stddev});
        vmax = std::max(vmax, st.mean + st.stddev);
      }
      if (vmax <= 0) vmax = 1.0;
      const double bar_w = 60, gap = 30, left = 60, base_y = 340, plot_h = 280;
      const double width = left + double(bars.size()) * (bar_w + gap) + gap;
      std::ostringstream svg;
      svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
      svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << i64(width)
          << "\" height=\"400\" viewBox=\"0 0 " << i64(width) << " 400\">\n";
      svg << "<text x=\"" << i64(width / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
          << ds << " / " << metric << "</text>\n";
      svg << "<line x1=\"" << left - 10 << "\" y1=\"" << base_y << "\" x2=\"" << i64(width - 10)
          << "\" y2=\"" << base_y << "\" stroke=\"black\"/>\n";
      for (std::size_t i = 0; i < bars.size(); ++i) {
        const double x = left + double(i) * (bar_w + gap);
        const double h = bars[i].mean / vmax * plot_h;
        const double y = base_y - h;
        svg << "<rect data-mean=\"" << bars[i].mean << "\" x=\"" << x << "\" y=\"" << y
            << "\" width=\"" << bar_w << "\" height=\"" << h << "\" fill=\"#4878a8\"/>\n";
        const double wy1 = base_y - (bars[i].mean + bars[i].stddev) / vmax * plot_h;
        const double wy2 = base_y - std::max(0.0, bars[i].mean - bars[i].stddev) / vmax * plot_h;
        const double cx = x + bar_w / 2;
        svg << "<line x1=\"" << cx << "\" y1=\"" << wy1 << "\" x2=\"" << cx << "\" y2=\"" << wy2
            << "\" stroke=\"black\"/>\n";
        svg << "<line x1=\"" << cx - 8 << "\" y1=\"" << wy1 << "\" x2=\"" << cx + 8 << "\" y2=\""
            << wy1 << "\" stroke=\"black\"/>\n";
        svg << "<line x1=\"" << cx - 8 << "\" y1=\"" << wy2 << "\" x2=\"" << cx + 8 << "\" y2=\""
            << wy2 << "\" stroke=\"black\"/>\n";
        svg << "<text x=\"" << cx << "\" y=\"" << base_y + 18
            << "\" text-anchor=\"middle\" font-size=\"10\">" << bars[i].label << "</text>\n";
      }
      svg << "</svg>\n";
      write_file((fs::path(out_dir) / (ds + "_" + metric + ".svg")).string(), svg.str());
    }
  }
}

ResultsRow row_from_result(const ExperimentConfig& cfg, const std::string& dataset_name,
                           const TrainResult& r) {
  ResultsRow row;
  row.dataset = dataset_name;
  row.method = method_name(cfg.settings.method.id);
  row.strategy = strategy_name(cfg.settings.sampler.strategy);
  row.criterion = criterion_name(cfg.settings.criterion);
  row.seed = r.seed;
  row.acc = r.test_accuracy;
  row.auc = r.test_auc;
  row.ap = r.test_ap;
  row.nmi = r.test_nmi;
  row.ari = r.test_ari;
  row.act_mem_mb = r.activation_mb;
  row.throughput_it_s = r.throughput;
  row.best_epoch = r.best_step;
  return row;
}

}  // namespace graphfm
