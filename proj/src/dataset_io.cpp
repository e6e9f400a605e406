#include <charconv>
#include <fstream>
#include <sstream>

#include <json.hpp>
#include <zlib.h>

#include "sfd/error.hpp"
#include "sfd/learn.hpp"

namespace sfd {

namespace {

bool is_gzip_path(const std::string& path) {
  return path.size() >= 3 && path.compare(path.size() - 3, 3, ".gz") == 0;
}

void append_float(std::string& out, float v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

std::string read_all(const std::string& path) {
  if (is_gzip_path(path)) {
    gzFile f = gzopen(path.c_str(), "rb");
    if (!f) throw IoError("cannot open dataset '" + path + "'");
    std::string out;
    char buf[1 << 16];
    int n = 0;
    while ((n = gzread(f, buf, sizeof buf)) > 0) out.append(buf, static_cast<std::size_t>(n));
    const bool failed = n < 0;
    gzclose(f);
    if (failed) throw IoError("corrupt gzip stream in '" + path + "'");
    return out;
  }
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open dataset '" + path + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

std::string sample_to_json_line(const Sample& s, std::size_t route, std::int64_t tick) {
  std::string line = "{\"obs\":[";
  line.reserve(s.obs.pixels.size() * 4 + 128);
  for (int r = 0; r < s.obs.height; ++r) {
    if (r) line += ',';
    line += '[';
    for (int c = 0; c < s.obs.width; ++c) {
      if (c) line += ',';
      append_float(line, s.obs.at(r, c));
    }
    line += ']';
  }
  line += "],\"y_s\":" + nlohmann::json(s.y_s).dump();
  line += ",\"y_t\":" + nlohmann::json(s.y_t).dump();
  line += ",\"y_c\":" + std::to_string(s.y_c);
  line += ",\"route\":" + std::to_string(route);
  line += ",\"tick\":" + std::to_string(tick) + "}";
  return line;
}

void write_dataset(const DemoDataset& data, const std::string& path) {
  data.validate();
  std::string text;
  for (std::size_t r = 0; r < data.routes.size(); ++r) {
    const auto& span = data.routes[r];
    for (std::size_t i = span.start; i < span.start + span.length; ++i) {
      const auto& s = data.samples[i];
      text += sample_to_json_line(s, r, s.obs.tick);
      text += '\n';
    }
  }
  if (is_gzip_path(path)) {
    gzFile f = gzopen(path.c_str(), "wb");
    if (!f) throw IoError("cannot write dataset '" + path + "'");
    const int written = gzwrite(f, text.data(), static_cast<unsigned>(text.size()));
    gzclose(f);
    if (written != static_cast<int>(text.size())) throw IoError("failed writing '" + path + "'");
    return;
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write dataset '" + path + "'");
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!os) throw IoError("failed writing '" + path + "'");
}

DemoDataset read_dataset(const std::string& path) {
  const std::string text = read_all(path);
  DemoDataset data;
  std::istringstream lines(text);
  std::string line;
  std::int64_t current_route = -1;
  std::size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw IoError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    Sample s;
    const auto& rows = j.at("obs");
    s.obs.height = static_cast<int>(rows.size());
    s.obs.width = rows.empty() ? 0 : static_cast<int>(rows.front().size());
    s.obs.pixels.reserve(static_cast<std::size_t>(s.obs.width) * s.obs.height);
    for (const auto& row : rows) {
      if (static_cast<int>(row.size()) != s.obs.width) {
        throw IoError(path + ":" + std::to_string(line_no) + ": ragged observation");
      }
      for (const auto& v : row) s.obs.pixels.push_back(static_cast<float>(v.get<double>()));
    }
    s.y_s = j.at("y_s").get<double>();
    s.y_t = j.at("y_t").get<double>();
    s.y_c = j.at("y_c").get<int>();
    s.obs.tick = j.value("tick", std::int64_t{0});
    const auto route = j.at("route").get<std::int64_t>();
    if (route != current_route) {
      data.routes.push_back({data.samples.size(), 0, instruction_at(s.y_c)});
      current_route = route;
    }
    data.routes.back().length += 1;
    data.samples.push_back(std::move(s));
  }
  data.validate();
  return data;
}

}  // namespace sfd
