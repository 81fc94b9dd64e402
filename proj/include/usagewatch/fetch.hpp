#pragma once

#include <string>

#include <httplib.h>

// glibc's resolv.h (dragged in by httplib) leaves a `_res` macro behind that
// mangles identifiers in unrelated headers.
#ifdef _res
#undef _res
#endif

#include "usagewatch/errors.hpp"
#include "usagewatch/report.hpp"

namespace usagewatch {

namespace detail {

struct SplitUrl {
  std::string base;  // scheme://host[:port]
  std::string path;  // /path?query
};

inline SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos ||
      (url.substr(0, scheme_end) != "http" && url.substr(0, scheme_end) != "https")) {
    throw ParameterError("URL must start with http:// or https://: " + url);
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace detail

// Downloads url into dest_path. HTTPS requires an OpenSSL-enabled build.
inline void fetch_url(const std::string& url, const std::string& dest_path,
                      int timeout_seconds = 60) {
  const auto [base, path] = detail::split_url(url);
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (base.rfind("https://", 0) == 0) {
    throw IoError("this build lacks TLS support; fetch over http:// or download manually");
  }
#endif
  httplib::Client client(base);
  client.set_connection_timeout(timeout_seconds);
  client.set_read_timeout(timeout_seconds);
  client.set_follow_location(true);
  auto response = client.Get(path);
  if (!response) {
    throw IoError("fetch failed for " + url + ": " + httplib::to_string(response.error()));
  }
  if (response->status != 200) {
    throw IoError("fetch failed for " + url + ": HTTP " + std::to_string(response->status));
  }
  write_text_file(dest_path, response->body);
}

}  // namespace usagewatch
