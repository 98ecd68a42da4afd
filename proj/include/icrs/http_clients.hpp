#pragma once
// Chat-completions-style HTTP clients. Credentials come from the environment
// (ICRS_API_KEY); everything else lives in the run config.

#include <string>

#include "icrs/clients.hpp"

namespace icrs {

class HttpModelClient : public ModelClient {
public:
    // endpoint: base URL, e.g. "http://localhost:8089"; model_name goes into
    // the request body.
    HttpModelClient(std::string endpoint, std::string model_name);

    std::string complete(const ModelRequest& request) override;
    std::string identity() const override { return "http:" + endpoint_; }

private:
    std::string endpoint_;
    std::string model_name_;
};

class HttpJudgeClient : public JudgeClient {
public:
    HttpJudgeClient(std::string endpoint, std::string model_name)
        : inner_(std::move(endpoint), std::move(model_name)) {}

    std::string judge(const std::string& key, const std::string& prompt) override {
        ModelRequest request;
        request.key = key;
        request.text = prompt;
        return inner_.complete(request);
    }
    std::string identity() const override { return inner_.identity(); }

private:
    HttpModelClient inner_;
};

class HttpEmbeddingClient : public EmbeddingClient {
public:
    HttpEmbeddingClient(std::string endpoint, std::string model_name);

    std::vector<double> embed(const std::string& text) override;
    std::string identity() const override { return "http:" + endpoint_; }

private:
    std::string endpoint_;
    std::string model_name_;
};

}  // namespace icrs
