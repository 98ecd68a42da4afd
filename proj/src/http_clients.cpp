#include "icrs/http_clients.hpp"

#include <cstdlib>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "icrs/error.hpp"

namespace icrs {

using nlohmann::json;

namespace {

httplib::Headers auth_headers() {
    httplib::Headers headers = {{"Content-Type", "application/json"}};
    if (const char* key = std::getenv("ICRS_API_KEY"))
        headers.emplace("Authorization", std::string("Bearer ") + key);
    return headers;
}

json post_json(const std::string& endpoint, const std::string& path,
               const json& body) {
    httplib::Client client(endpoint);
    client.set_read_timeout(120, 0);
    auto result = client.Post(path, auth_headers(), body.dump(), "application/json");
    if (!result)
        throw io_error("transport failure",
                       endpoint + path + ": " + httplib::to_string(result.error()));
    if (result->status != 200)
        throw io_error("transport failure", endpoint + path + ": HTTP " +
                                                std::to_string(result->status));
    try {
        return json::parse(result->body);
    } catch (const json::exception& e) {
        throw io_error("transport failure",
                       endpoint + path + ": bad JSON: " + e.what());
    }
}

}  // namespace

HttpModelClient::HttpModelClient(std::string endpoint, std::string model_name)
    : endpoint_(std::move(endpoint)), model_name_(std::move(model_name)) {}

std::string HttpModelClient::complete(const ModelRequest& request) {
    json body;
    body["model"] = model_name_;
    body["temperature"] = request.temperature;
    if (request.image_refs.empty()) {
        body["messages"] = json::array({{{"role", "user"}, {"content", request.text}}});
    } else {
        json content = json::array({{{"type", "text"}, {"text", request.text}}});
        for (const auto& ref : request.image_refs)
            content.push_back({{"type", "image_url"}, {"image_url", {{"url", ref}}}});
        body["messages"] =
            json::array({{{"role", "user"}, {"content", std::move(content)}}});
    }
    json response = post_json(endpoint_, "/v1/chat/completions", body);
    try {
        return response.at("choices").at(0).at("message").at("content")
            .get<std::string>();
    } catch (const json::exception& e) {
        throw io_error("transport failure",
                       endpoint_ + ": unexpected response shape: " + e.what());
    }
}

HttpEmbeddingClient::HttpEmbeddingClient(std::string endpoint, std::string model_name)
    : endpoint_(std::move(endpoint)), model_name_(std::move(model_name)) {}

std::vector<double> HttpEmbeddingClient::embed(const std::string& text) {
    json body;
    body["model"] = model_name_;
    body["input"] = text;
    json response = post_json(endpoint_, "/v1/embeddings", body);
    try {
        return response.at("data").at(0).at("embedding").get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw io_error("transport failure",
                       endpoint_ + ": unexpected response shape: " + e.what());
    }
}

}  // namespace icrs
