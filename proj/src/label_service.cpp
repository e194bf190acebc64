#include "sepoa/label_service.hpp"

#include <httplib.h>

#include <json.hpp>

#include "sepoa/errors.hpp"

namespace sepoa {

using nlohmann::json;

namespace {

json positions_json(const std::vector<std::pair<double, double>>& pts) {
  json arr = json::array();
  for (const auto& [x, y] : pts) arr.push_back({x, y});
  return arr;
}

}  // namespace

HttpReply handle_get_pending(const LabelMailbox& mailbox) {
  auto q = mailbox.oldest_pending();
  if (!q) return {204, ""};
  json doc;
  doc["query_id"] = q->query_id;
  doc["left"] = {{"positions", positions_json(q->left_positions)}};
  doc["right"] = {{"positions", positions_json(q->right_positions)}};
  doc["env"] = q->env;
  doc["step_count"] = q->step_count;
  doc["attempts"] = q->attempts;
  return {200, doc.dump()};
}

HttpReply handle_post_label(LabelMailbox& mailbox, const std::string& body) {
  json doc = json::parse(body, nullptr, false);
  if (doc.is_discarded() || !doc.is_object() || !doc.contains("query_id") || !doc.contains("choice") ||
      !doc["query_id"].is_string() || !doc["choice"].is_string())
    return {400, json{{"error", "expected {\"query_id\": string, \"choice\": left|right|skip}"}}.dump()};
  auto choice = parse_choice(doc["choice"].get<std::string>());
  if (!choice) return {400, json{{"error", "choice must be left, right or skip"}}.dump()};
  auto id = doc["query_id"].get<std::string>();
  switch (mailbox.post(id, *choice)) {
    case PostResult::Accepted: return {200, json{{"query_id", id}, {"accepted", true}}.dump()};
    case PostResult::Conflict: return {409, json{{"query_id", id}, {"error", "already labeled"}}.dump()};
    case PostResult::NotFound: break;
  }
  return {404, json{{"query_id", id}, {"error", "unknown query"}}.dump()};
}

HttpReply handle_get_status(const LabelMailbox& mailbox) {
  auto s = mailbox.status();
  json doc{{"feedback_used", s.feedback_used}, {"n_total", s.n_total},          {"step", s.step},
           {"queue_depth", s.queue_depth},     {"latest_return", s.latest_return}};
  return {200, doc.dump()};
}

struct LabelService::Impl {
  httplib::Server server;
};

LabelService::LabelService(LabelMailbox& mailbox, Options options)
    : mailbox_(mailbox), options_(std::move(options)), impl_(std::make_unique<Impl>()) {}

LabelService::~LabelService() { stop(); }

void LabelService::start() {
  auto& srv = impl_->server;
  auto reply = [](httplib::Response& res, const HttpReply& r) {
    res.status = r.status;
    if (!r.body.empty()) res.set_content(r.body, "application/json");
  };
  srv.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const char*>(&yes), sizeof(yes));
  });
  srv.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  srv.Get("/api/pending", [this, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, handle_get_pending(mailbox_));
  });
  srv.Post("/api/labels", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, handle_post_label(mailbox_, req.body));
  });
  srv.Get("/api/status", [this, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, handle_get_status(mailbox_));
  });
  srv.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
  if (!options_.static_dir.empty()) srv.set_mount_point("/", options_.static_dir);

  if (options_.port == 0)
    port_ = srv.bind_to_any_port(options_.host);
  else
    port_ = srv.bind_to_port(options_.host, options_.port) ? options_.port : -1;
  if (port_ <= 0) throw ServiceUnavailable();
  thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void LabelService::stop() {
  if (!thread_.joinable()) return;
  impl_->server.stop();
  thread_.join();
}

}  // namespace sepoa
