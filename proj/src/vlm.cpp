// OpenAI-compatible chat-completions client for vision models.

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <regex>

#include "base64.hpp"
#include "sfd/error.hpp"
#include "sfd/planner.hpp"

namespace sfd {

namespace {

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;    // without trailing slash
};

ParsedUrl parse_url(const std::string& url) {
  static const std::regex re(R"(^(https?)://([A-Za-z0-9.\-]+|\[[0-9A-Fa-f:]+\])(:([0-9]{1,5}))?(/[^\s?#]*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, re)) throw ConfigError("malformed endpoint URL '" + url + "'");
  if (m[4].matched) {
    const int port = std::stoi(m[4].str());
    if (port < 1 || port > 65535) throw ConfigError("endpoint port out of range in '" + url + "'");
  }
  ParsedUrl p;
  p.origin = m[1].str() + "://" + m[2].str() + (m[3].matched ? m[3].str() : "");
  p.path = m[5].matched ? m[5].str() : "";
  while (!p.path.empty() && p.path.back() == '/') p.path.pop_back();
  return p;
}

std::string extract_content(const std::string& body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw NetworkError(std::string("endpoint returned invalid JSON: ") + e.what());
  }
  try {
    const auto& content = j.at("choices").at(0).at("message").at("content");
    if (content.is_string()) return content.get<std::string>();
    std::string text;
    for (const auto& part : content) {
      if (part.value("type", "") == "text") text += part.value("text", "");
    }
    return text;
  } catch (const nlohmann::json::exception& e) {
    throw NetworkError(std::string("unexpected response shape: ") + e.what());
  }
}

}  // namespace

void EndpointConfig::validate() const {
  parse_url(base_url);
  if (!(timeout_s > 0.0)) throw ConfigError("endpoint timeout must be positive");
}

std::string vlm_request_body(const PromptBundle& bundle, const EndpointConfig& endpoint) {
  const std::string image_url = "data:image/png;base64," + base64(encode_png(bundle.image));
  nlohmann::json content = nlohmann::json::array();
  content.push_back({{"type", "text"}, {"text", bundle.full_text()}});
  content.push_back({{"type", "image_url"}, {"image_url", {{"url", image_url}}}});
  nlohmann::json body;
  body["model"] = endpoint.model;
  body["messages"] = nlohmann::json::array({{{"role", "user"}, {"content", content}}});
  return body.dump();
}

VlmReply vlm_request(const PromptBundle& bundle, const EndpointConfig& endpoint) {
  endpoint.validate();
  const ParsedUrl url = parse_url(endpoint.base_url);
  httplib::Headers headers;
  if (!endpoint.api_key_env.empty()) {
    const char* key = std::getenv(endpoint.api_key_env.c_str());
    if (key == nullptr || *key == '\0') {
      throw ConfigError("API key variable " + endpoint.api_key_env + " is not set");
    }
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  const std::string body = vlm_request_body(bundle, endpoint);

  httplib::Client client(url.origin);
  const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
      std::chrono::duration<double>(endpoint.timeout_s));
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);

  const auto t0 = std::chrono::steady_clock::now();
  std::string failure;
  for (int attempt = 0; attempt < 2; ++attempt) {
    auto res = client.Post(url.path + "/chat/completions", headers, body, "application/json");
    if (!res) {
      failure = "request failed: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 400 && res->status < 500) {
      throw ConfigError("endpoint rejected the request with HTTP " + std::to_string(res->status));
    }
    if (res->status >= 500) {
      failure = "endpoint answered HTTP " + std::to_string(res->status);
      continue;
    }
    VlmReply reply;
    reply.raw = extract_content(res->body);
    reply.wall_latency =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return reply;
  }
  throw NetworkError(failure + " (after one retry)");
}

}  // namespace sfd
