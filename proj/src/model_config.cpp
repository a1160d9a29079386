#include "tssd/model_config.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <sstream>
#include <stdexcept>

namespace tssd {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw std::invalid_argument("config: '" + std::string(key) + "' expects an integer, got '" + std::string(text) + "'");
  }
  return value;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "yes" || text == "1") return true;
  if (text == "false" || text == "no" || text == "0") return false;
  throw std::invalid_argument("config: '" + std::string(key) + "' expects true/false, got '" + std::string(text) + "'");
}

std::vector<int> power_of_two_dilations(int branches) {
  std::vector<int> d;
  for (int b = 0; b < branches; ++b) d.push_back(1 << b);
  return d;
}

}  // namespace

std::string to_string(Family family) { return family == Family::res ? "res" : "inc"; }

Family parse_family(std::string_view text) {
  if (text == "res") return Family::res;
  if (text == "inc") return Family::inc;
  throw std::invalid_argument("unknown model family '" + std::string(text) + "' (expected res or inc)");
}

std::vector<int> parse_int_list(std::string_view text) {
  std::vector<int> out;
  text = trim(text);
  if (!text.empty() && text.front() == '{' && text.back() == '}') text = text.substr(1, text.size() - 2);
  while (!text.empty()) {
    const auto comma = text.find(',');
    const auto item = trim(text.substr(0, comma));
    out.push_back(parse_number<int>("list", item));
    if (comma == std::string_view::npos) break;
    text = text.substr(comma + 1);
  }
  return out;
}

std::string format_int_list(const std::vector<int>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + std::to_string(values[i]);
  return out;
}

ModelConfig ModelConfig::res(int blocks, bool use_skip) {
  ModelConfig c;
  c.family = Family::res;
  c.blocks = blocks;
  c.channels.clear();
  for (int m = 0; m < blocks; ++m) c.channels.push_back(std::min(32 << std::min(m, 2), 128));
  c.branches = 1;
  c.dilations = {1};
  c.use_skip = use_skip;
  return c;
}

ModelConfig ModelConfig::inc(int blocks, int branches) {
  ModelConfig c;
  c.family = Family::inc;
  c.blocks = blocks;
  c.channels.clear();
  const int cap = blocks >= 5 ? 64 : 32;
  for (int m = 0; m < blocks; ++m) c.channels.push_back(std::min(8 << std::min(m, 3), cap));
  c.branches = branches;
  c.dilations = power_of_two_dilations(branches);
  c.use_skip = false;
  return c;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("model config: " + what); };
  if (blocks < 1) fail("M must be at least 1");
  if (channels.size() != static_cast<std::size_t>(blocks)) {
    fail("channel list has " + std::to_string(channels.size()) + " entries, M = " + std::to_string(blocks));
  }
  if (std::any_of(channels.begin(), channels.end(), [](int c) { return c < 1; })) fail("channels must be positive");
  if (fc[0] < 1 || fc[1] < 1) fail("fc widths must be positive");
  if (stem_channels < 1) fail("stem_channels must be positive");
  if (stem_kernel < 1) fail("stem_kernel must be positive");
  if (family == Family::inc) {
    if (branches < 1) fail("branches must be at least 1");
    if (dilations.size() != static_cast<std::size_t>(branches)) {
      fail("dilation list has " + std::to_string(dilations.size()) + " entries, branches = " +
           std::to_string(branches));
    }
    for (std::size_t b = 0; b < dilations.size(); ++b) {
      const int d = dilations[b];
      if (d < 1 || (d & (d - 1)) != 0) fail("dilation " + std::to_string(d) + " is not a power of two");
      if (b > 0 && d <= dilations[b - 1]) fail("dilations must be strictly increasing");
    }
  }
  Index length = input_length;
  for (int p = 0; p < blocks; ++p) {
    if (length < kPoolWindow) fail("input_length " + std::to_string(input_length) + " too short for M = " +
                                   std::to_string(blocks));
    length /= kPoolWindow;
  }
}

int ModelConfig::head_inputs() const {
  return family == Family::res ? channels.back() : branches * channels.back();
}

std::vector<Index> ModelConfig::time_trace() const {
  std::vector<Index> trace{input_length};
  Index length = input_length;
  for (int p = 0; p < blocks; ++p) {
    length /= kPoolWindow;
    trace.push_back(length);
  }
  return trace;
}

std::string ModelConfig::to_text() const {
  std::ostringstream os;
  os << "family = " << to_string(family) << '\n'
     << "M = " << blocks << '\n'
     << "channels = " << format_int_list(channels) << '\n'
     << "branches = " << branches << '\n'
     << "dilations = " << format_int_list(dilations) << '\n'
     << "use_skip = " << (use_skip ? "true" : "false") << '\n'
     << "fc = " << fc[0] << ',' << fc[1] << '\n'
     << "stem_channels = " << stem_channels << '\n'
     << "stem_kernel = " << stem_kernel << '\n'
     << "input_length = " << input_length << '\n';
  return os.str();
}

ModelConfig ModelConfig::parse(std::string_view text) {
  std::map<std::string, std::string, std::less<>> kv;
  int line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key = value");
    }
    kv[std::string(trim(line.substr(0, eq)))] = std::string(trim(line.substr(eq + 1)));
  }

  ModelConfig c;
  if (auto it = kv.find("family"); it != kv.end()) c.family = parse_family(it->second);
  bool have_dilations = false;
  bool have_channels = false;
  for (const auto& [key, value] : kv) {
    if (key == "family") {
    } else if (key == "M") {
      c.blocks = parse_number<int>(key, value);
    } else if (key == "channels") {
      c.channels = parse_int_list(value);
      have_channels = true;
    } else if (key == "branches") {
      c.branches = parse_number<int>(key, value);
    } else if (key == "dilations") {
      c.dilations = parse_int_list(value);
      have_dilations = true;
    } else if (key == "use_skip") {
      c.use_skip = parse_bool(key, value);
    } else if (key == "fc") {
      const auto fc = parse_int_list(value);
      if (fc.size() != 2) throw std::invalid_argument("config: fc expects exactly two widths");
      c.fc = {fc[0], fc[1]};
    } else if (key == "stem_channels") {
      c.stem_channels = parse_number<int>(key, value);
    } else if (key == "stem_kernel") {
      c.stem_kernel = parse_number<int>(key, value);
    } else if (key == "input_length") {
      c.input_length = parse_number<Index>(key, value);
    } else {
      throw std::invalid_argument("config: unknown key '" + key + "'");
    }
  }
  if (!have_channels) {
    c.channels = c.family == Family::res ? ModelConfig::res(c.blocks).channels
                                         : ModelConfig::inc(c.blocks, std::max(c.branches, 1)).channels;
  }
  if (!have_dilations) c.dilations = power_of_two_dilations(c.family == Family::inc ? c.branches : 1);
  c.validate();
  return c;
}

}  // namespace tssd
