#include "http_json.hpp"

#include "httplib.h"

namespace booster::detail {

nlohmann::json post_json(const std::string& url, const nlohmann::json& body,
                         const std::map<std::string, std::string>& headers, std::chrono::seconds timeout) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw HttpError("endpoint without scheme: " + url);
    auto path_start = url.find('/', scheme_end + 3);
    std::string origin = path_start == std::string::npos ? url : url.substr(0, path_start);
    std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

    httplib::Client client(origin);
    if (!client.is_valid()) throw HttpError("unsupported endpoint " + url);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);

    httplib::Headers h;
    for (const auto& [k, v] : headers) h.emplace(k, v);
    auto res = client.Post(path, h, body.dump(), "application/json");
    if (!res) throw HttpError("request to " + url + " failed: " + httplib::to_string(res.error()));
    if (res->status < 200 || res->status >= 300)
        throw HttpError("request to " + url + " returned HTTP " + std::to_string(res->status));
    try {
        return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
        throw HttpError("unparsable reply from " + url + ": " + e.what());
    }
}

}  // namespace booster::detail
