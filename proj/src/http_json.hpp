#pragma once

#include <chrono>
#include <map>
#include <stdexcept>
#include <string>

#include "json.hpp"

namespace booster::detail {

struct HttpError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// POSTs a JSON body and parses the JSON reply. Throws HttpError on
// transport failures, non-2xx statuses and unparsable replies.
nlohmann::json post_json(const std::string& url, const nlohmann::json& body,
                         const std::map<std::string, std::string>& headers,
                         std::chrono::seconds timeout);

}  // namespace booster::detail
