#include "mafn/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mafn {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  size_t b = s.find_last_not_of(" \t\r");
  return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("config: key '" + key + "' expects true/false, got '" + v + "'");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw std::invalid_argument("config: key '" + key + "' has a non-integer item '" + item + "'");
    }
  }
  if (out.empty()) throw std::invalid_argument("config: key '" + key + "' needs at least one value");
  return out;
}

int parse_int(const std::string& key, const std::string& v) {
  try {
    return std::stoi(v);
  } catch (const std::exception&) {
    throw std::invalid_argument("config: key '" + key + "' expects an integer, got '" + v + "'");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    return std::stod(v);
  } catch (const std::exception&) {
    throw std::invalid_argument("config: key '" + key + "' expects a number, got '" + v + "'");
  }
}

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

}  // namespace

void RunConfig::apply_override(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  if (key == "model.stages") model.stages = parse_int(key, v);
  else if (key == "model.window") model.window = parse_int(key, v);
  else if (key == "model.channels") model.channels = parse_int(key, v);
  else if (key == "model.patch") model.patch = parse_int(key, v);
  else if (key == "model.corr_radius") model.corr_radius = parse_int(key, v);
  else if (key == "model.vi_kernels") model.vi_kernels = parse_int_list(key, v);
  else if (key == "model.msrc_kernels") model.msrc_kernels = parse_int_list(key, v);
  else if (key == "model.msrc_width") model.msrc_width = parse_int(key, v);
  else if (key == "model.arc_kernels") model.arc_kernels = parse_int(key, v);
  else if (key == "model.text_width") model.text_width = parse_int(key, v);
  else if (key == "model.text_positional") model.text_positional = parse_bool(key, v);
  else if (key == "model.adaptive_noise") model.adaptive_noise = parse_bool(key, v);
  else if (key == "model.cfm_fusion") model.cfm_fusion = parse_bool(key, v);
  else if (key == "model.msrc") model.msrc = parse_bool(key, v);
  else if (key == "model.ablate_language") model.ablate_language = parse_bool(key, v);
  else if (key == "train.lr") train.lr = parse_double(key, v);
  else if (key == "train.weight_decay") train.weight_decay = parse_double(key, v);
  else if (key == "train.batch") train.batch = parse_int(key, v);
  else if (key == "train.epochs") train.epochs = parse_int(key, v);
  else if (key == "train.seed") train.seed = uint64_t(std::stoull(v));
  else if (key == "train.early_stop_miou") train.early_stop_miou = parse_double(key, v);
  else if (key == "data.dir") data.dir = v;
  else if (key == "data.image_size") data.image_size = parse_int(key, v);
  else throw std::invalid_argument("config: unknown key '" + key + "'");
}

RunConfig RunConfig::parse_text(const std::string& text) {
  RunConfig cfg;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    const size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": expected 'key = value', got '" + t + "'");
    cfg.apply_override(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  if (cfg.model.stages < 1) throw std::invalid_argument("config: model.stages must be >= 1");
  if (cfg.train.batch < 1) throw std::invalid_argument("config: train.batch must be >= 1");
  if (cfg.train.epochs < 1) throw std::invalid_argument("config: train.epochs must be >= 1");
  return cfg;
}

RunConfig RunConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open config");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_text(buf.str());
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  os << "data.dir = " << data.dir << "\n";
  os << "data.image_size = " << data.image_size << "\n";
  os << "model.ablate_language = " << (model.ablate_language ? "true" : "false") << "\n";
  os << "model.adaptive_noise = " << (model.adaptive_noise ? "true" : "false") << "\n";
  os << "model.arc_kernels = " << model.arc_kernels << "\n";
  os << "model.cfm_fusion = " << (model.cfm_fusion ? "true" : "false") << "\n";
  os << "model.channels = " << model.channels << "\n";
  os << "model.corr_radius = " << model.corr_radius << "\n";
  os << "model.msrc = " << (model.msrc ? "true" : "false") << "\n";
  os << "model.msrc_kernels = " << join_ints(model.msrc_kernels) << "\n";
  os << "model.msrc_width = " << model.msrc_width << "\n";
  os << "model.patch = " << model.patch << "\n";
  os << "model.stages = " << model.stages << "\n";
  os << "model.text_positional = " << (model.text_positional ? "true" : "false") << "\n";
  os << "model.text_width = " << model.text_width << "\n";
  os << "model.vi_kernels = " << join_ints(model.vi_kernels) << "\n";
  os << "model.window = " << model.window << "\n";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", train.lr);
  os << "train.lr = " << buf << "\n";
  std::snprintf(buf, sizeof(buf), "%.9g", train.weight_decay);
  os << "train.weight_decay = " << buf << "\n";
  os << "train.batch = " << train.batch << "\n";
  os << "train.epochs = " << train.epochs << "\n";
  os << "train.seed = " << train.seed << "\n";
  std::snprintf(buf, sizeof(buf), "%.9g", train.early_stop_miou);
  os << "train.early_stop_miou = " << buf << "\n";
  return os.str();
}

}  // namespace mafn
