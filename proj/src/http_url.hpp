#pragma once

#include "ambi/errors.hpp"

#include <string>

namespace ambi {

struct SplitUrl {
    std::string scheme_host_port;  // "http://host:port"
    std::string path;              // "" or "/v1"
};

/// Splits "http://host:8080/v1/x" into ("http://host:8080", "/v1/x").
/// Trailing slashes are dropped from the path.
inline SplitUrl split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw ValidationError("base_url", "missing scheme in '" + url + "'");
    }
    const auto path_start = url.find('/', scheme_end + 3);
    SplitUrl out;
    if (path_start == std::string::npos) {
        out.scheme_host_port = url;
    } else {
        out.scheme_host_port = url.substr(0, path_start);
        out.path = url.substr(path_start);
    }
    while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
    return out;
}

}  // namespace ambi
