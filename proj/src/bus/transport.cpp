#include "tims/bus/transport.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

namespace tims::bus {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

ServerOptions server_options_from_env(ServerOptions base) {
  const auto port_from = [](const char* name, std::uint16_t fallback) -> std::uint16_t {
    const char* v = std::getenv(name);
    if (!v || !*v) return fallback;
    char* end = nullptr;
    const long p = std::strtol(v, &end, 10);
    if (*end != '\0' || p < 0 || p > 65535) throw ConfigError(std::string(name) + " is not a valid port: " + v);
    return static_cast<std::uint16_t>(p);
  };
  base.bus_port = port_from("TIMS_BUS_PORT", base.bus_port);
  base.http_port = port_from("TIMS_HTTP_PORT", base.http_port);
  return base;
}

// ---------------------------------------------------------------------------
// Protocol

namespace {

json error_message(const std::string& kind, const std::string& message) {
  return json{{"op", "error"}, {"kind", kind}, {"message", message}};
}

}  // namespace

void ProtocolHandler::handle_text(const std::string& text) {
  json msg;
  try {
    msg = json::parse(text);
  } catch (const json::parse_error& e) {
    send_text(error_message("parse", e.what()).dump());
    return;
  }
  const std::string op = msg.is_object() ? msg.value("op", "") : "";
  try {
    if (op == "publish") {
      const auto env = envelope_from_json(msg.at("env"));
      const auto ack = broker_.publish(env);
      if (msg.value("ack", true))
        send_text(json{{"op", "ack"},
                       {"device", ack.device_id},
                       {"seq", ack.seq},
                       {"status", ack.status == PublishStatus::kAccepted ? "accepted" : "stale"}}
                      .dump());
    } else if (op == "subscribe") {
      const auto device = msg.at("device").get<std::string>();
      auto sub = std::make_shared<QueueSubscriber>(capacity_);
      std::weak_ptr<QueueSubscriber> weak = sub;
      sub->set_notify([this, weak] {
        post([this, weak] {
          if (auto s = weak.lock()) drain(s);
        });
      });
      {
        std::lock_guard lock(mu_);
        subs_.emplace_back(device, sub);
      }
      // Ack first so the client knows the latest-value replay that follows
      // belongs to this subscription.
      send_text(json{{"op", "ack"}, {"device", device}, {"status", "subscribed"}}.dump());
      broker_.subscribe(device, sub);
    } else if (op == "unsubscribe") {
      const auto device = msg.at("device").get<std::string>();
      std::vector<std::shared_ptr<QueueSubscriber>> gone;
      {
        std::lock_guard lock(mu_);
        for (auto it = subs_.begin(); it != subs_.end();) {
          if (it->first == device) {
            gone.push_back(it->second);
            it = subs_.erase(it);
          } else {
            ++it;
          }
        }
      }
      for (auto& s : gone) {
        broker_.unsubscribe(s);
        s->close();
      }
      send_text(json{{"op", "ack"}, {"device", device}, {"status", "unsubscribed"}}.dump());
    } else {
      send_text(error_message("protocol", "unknown op '" + op + "'").dump());
    }
  } catch (const Error& e) {
    send_text(error_message(e.kind(), e.what()).dump());
  } catch (const json::exception& e) {
    send_text(error_message("protocol", e.what()).dump());
  }
}

void ProtocolHandler::drain(const std::shared_ptr<QueueSubscriber>& sub) {
  while (auto env = sub->try_pop()) send_text(json{{"op", "deliver"}, {"env", envelope_to_json(*env)}}.dump());
}

void ProtocolHandler::drop_subscriptions() {
  std::vector<std::pair<std::string, std::shared_ptr<QueueSubscriber>>> subs;
  {
    std::lock_guard lock(mu_);
    subs.swap(subs_);
  }
  for (auto& [_, s] : subs) {
    s->set_notify(nullptr);
    broker_.unsubscribe(s);
    s->close();
  }
}

// ---------------------------------------------------------------------------
// Raw TCP connection

namespace {

using Strand = asio::strand<asio::io_context::executor_type>;

class TcpConnection : public ProtocolHandler, public std::enable_shared_from_this<TcpConnection> {
 public:
  TcpConnection(tcp::socket socket, Broker& broker, std::size_t capacity)
      : ProtocolHandler(broker, capacity),
        strand_(asio::make_strand(static_cast<asio::io_context&>(socket.get_executor().context()))),
        socket_(std::move(socket)) {}

  void start() {
    socket_.set_option(tcp::no_delay(true));
    asio::dispatch(strand_, [self = shared_from_this()] { self->do_read(); });
  }

 protected:
  void send_text(std::string text) override {
    asio::dispatch(strand_, [self = shared_from_this(), frame = encode_frame(text)]() mutable {
      self->queue_.push_back(std::move(frame));
      if (self->queue_.size() == 1) self->do_write();
    });
  }

  void post(std::function<void()> fn) override {
    asio::post(strand_, [self = shared_from_this(), fn = std::move(fn)] { fn(); });
  }

 private:
  void do_read() {
    socket_.async_read_some(asio::buffer(buf_), asio::bind_executor(strand_, [self = shared_from_this()](
                                                                                 beast::error_code ec, std::size_t n) {
      if (ec) return self->shutdown();
      self->decoder_.feed(std::string_view(self->buf_.data(), n));
      try {
        while (auto frame = self->decoder_.next()) self->handle_text(*frame);
      } catch (const SchemaError& e) {
        self->send_text(error_message("framing", e.what()).dump());
        return self->shutdown();
      }
      self->do_read();
    }));
  }

  void do_write() {
    asio::async_write(socket_, asio::buffer(queue_.front()),
                      asio::bind_executor(strand_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
                        if (ec) return self->shutdown();
                        self->queue_.pop_front();
                        if (!self->queue_.empty()) self->do_write();
                      }));
  }

  void shutdown() {
    if (closed_) return;
    closed_ = true;
    drop_subscriptions();
    beast::error_code ignored;
    socket_.shutdown(tcp::socket::shutdown_both, ignored);
    socket_.close(ignored);
  }

  Strand strand_;
  tcp::socket socket_;
  std::array<char, 8192> buf_{};
  FrameDecoder decoder_;
  std::deque<std::string> queue_;
  bool closed_ = false;
};

// ---------------------------------------------------------------------------
// WebSocket connection

class WsConnection : public ProtocolHandler, public std::enable_shared_from_this<WsConnection> {
 public:
  WsConnection(tcp::socket socket, Broker& broker, std::size_t capacity)
      : ProtocolHandler(broker, capacity),
        strand_(asio::make_strand(static_cast<asio::io_context&>(socket.get_executor().context()))),
        ws_(std::move(socket)) {}

  void accept(http::request<http::string_body> req) {
    asio::dispatch(strand_, [self = shared_from_this(), req = std::move(req)]() mutable {
      self->ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
      self->ws_.text(true);
      self->ws_.async_accept(req, asio::bind_executor(self->strand_, [self](beast::error_code ec) {
        if (ec) return;
        self->open_ = true;
        self->do_read();
        if (!self->queue_.empty()) self->do_write();
      }));
    });
  }

 protected:
  void send_text(std::string text) override {
    asio::dispatch(strand_, [self = shared_from_this(), text = std::move(text)]() mutable {
      self->queue_.push_back(std::move(text));
      if (self->open_ && self->queue_.size() == 1) self->do_write();
    });
  }

  void post(std::function<void()> fn) override {
    asio::post(strand_, [self = shared_from_this(), fn = std::move(fn)] { fn(); });
  }

 private:
  void do_read() {
    ws_.async_read(buffer_, asio::bind_executor(strand_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->open_ = false;
        self->drop_subscriptions();
        return;
      }
      const std::string text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      self->handle_text(text);
      self->do_read();
    }));
  }

  void do_write() {
    ws_.async_write(asio::buffer(queue_.front()),
                    asio::bind_executor(strand_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
                      if (ec) {
                        self->open_ = false;
                        self->drop_subscriptions();
                        return;
                      }
                      self->queue_.pop_front();
                      if (!self->queue_.empty()) self->do_write();
                    }));
  }

  Strand strand_;
  websocket::stream<tcp::socket> ws_;
  beast::flat_buffer buffer_;
  std::deque<std::string> queue_;
  bool open_ = false;
};

// ---------------------------------------------------------------------------
// HTTP connection

std::string mime_type(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".html") return "text/html";
  if (ext == ".js" || ext == ".mjs") return "application/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json") return "application/json";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".png") return "image/png";
  return "application/octet-stream";
}

class HttpConnection : public std::enable_shared_from_this<HttpConnection> {
 public:
  HttpConnection(tcp::socket socket, Broker& broker, const ServerOptions& opts, std::shared_ptr<SessionService> service)
      : stream_(std::move(socket)), broker_(broker), opts_(opts), service_(std::move(service)) {}

  void start() { do_read(); }

 private:
  void do_read() {
    req_ = {};
    http::async_read(stream_, buffer_, req_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return;
      self->on_request();
    });
  }

  void on_request() {
    if (websocket::is_upgrade(req_)) {
      if (req_.target() == "/bus") {
        auto ws = std::make_shared<WsConnection>(stream_.release_socket(), broker_, opts_.queue_capacity);
        ws->accept(std::move(req_));
      }
      return;
    }
    auto res = std::make_shared<http::response<http::string_body>>(route());
    res->version(req_.version());
    res->keep_alive(req_.keep_alive());
    res->set(http::field::server, "tims");
    res->prepare_payload();
    http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code ec, std::size_t) {
      if (ec || !res->keep_alive()) {
        beast::error_code ignored;
        self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
        return;
      }
      self->do_read();
    });
  }

  http::response<http::string_body> json_response(http::status status, const json& body) {
    http::response<http::string_body> res{status, req_.version()};
    res.set(http::field::content_type, "application/json");
    res.set(http::field::access_control_allow_origin, "*");
    res.body() = body.dump();
    return res;
  }

  http::response<http::string_body> route() {
    const std::string target(req_.target());
    const auto method = req_.method();
    if (target.rfind("/session/", 0) == 0) {
      if (!service_) return json_response(http::status::service_unavailable, error_message("unavailable", "no session service"));
      try {
        if (target == "/session/state" && method == http::verb::get) return json_response(http::status::ok, service_->state());
        if (target == "/session/metrics" && method == http::verb::get) return json_response(http::status::ok, service_->metrics());
        if (target == "/session/start" && method == http::verb::post) {
          const json body = req_.body().empty() ? json::object() : json::parse(req_.body());
          return json_response(http::status::ok, service_->start(body));
        }
        if (target == "/session/stop" && method == http::verb::post) return json_response(http::status::ok, service_->stop());
      } catch (const Error& e) {
        return json_response(http::status::bad_request, error_message(e.kind(), e.what()));
      } catch (const json::exception& e) {
        return json_response(http::status::bad_request, error_message("parse", e.what()));
      }
      return json_response(http::status::not_found, error_message("not-found", target));
    }
    if (method == http::verb::get && !opts_.web_root.empty()) {
      std::string rel = target.substr(0, target.find('?'));
      if (rel == "/") rel = "/index.html";
      if (rel.find("..") == std::string::npos) {
        const auto file = opts_.web_root / rel.substr(1);
        std::ifstream in(file, std::ios::binary);
        if (in) {
          std::ostringstream ss;
          ss << in.rdbuf();
          http::response<http::string_body> res{http::status::ok, req_.version()};
          res.set(http::field::content_type, mime_type(file));
          res.body() = ss.str();
          return res;
        }
      }
    }
    return json_response(http::status::not_found, error_message("not-found", target));
  }

  beast::tcp_stream stream_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
  Broker& broker_;
  const ServerOptions& opts_;
  std::shared_ptr<SessionService> service_;
};

template <typename OnAccept>
class Listener : public std::enable_shared_from_this<Listener<OnAccept>> {
 public:
  Listener(asio::io_context& ioc, tcp::endpoint ep, OnAccept on_accept)
      : ioc_(ioc), acceptor_(ioc), on_accept_(std::move(on_accept)) {
    acceptor_.open(ep.protocol());
    acceptor_.set_option(asio::socket_base::reuse_address(true));
    acceptor_.bind(ep);
    acceptor_.listen(asio::socket_base::max_listen_connections);
  }

  std::uint16_t port() const { return acceptor_.local_endpoint().port(); }
  void run() { do_accept(); }
  void close() {
    beast::error_code ignored;
    acceptor_.close(ignored);
  }

 private:
  void do_accept() {
    acceptor_.async_accept(asio::make_strand(ioc_), [self = this->shared_from_this()](beast::error_code ec, tcp::socket s) {
      if (ec == asio::error::operation_aborted) return;
      if (!ec) self->on_accept_(std::move(s));
      self->do_accept();
    });
  }

  asio::io_context& ioc_;
  tcp::acceptor acceptor_;
  OnAccept on_accept_;
};

}  // namespace

struct BusServer::Impl {
  Broker& broker;
  ServerOptions opts;
  std::shared_ptr<SessionService> service;
  asio::io_context ioc;
  std::optional<asio::executor_work_guard<asio::io_context::executor_type>> work;
  std::vector<std::thread> threads;
  std::function<void()> close_listeners;
  std::uint16_t bus_port = 0;
  std::uint16_t http_port = 0;
  bool running = false;

  Impl(Broker& b, ServerOptions o, std::shared_ptr<SessionService> s)
      : broker(b), opts(std::move(o)), service(std::move(s)) {}
};

BusServer::BusServer(Broker& broker, ServerOptions options, std::shared_ptr<SessionService> service)
    : impl_(std::make_unique<Impl>(broker, std::move(options), std::move(service))) {}

BusServer::~BusServer() { stop(); }

void BusServer::start() {
  auto& im = *impl_;
  if (im.running) return;
  const auto addr = asio::ip::make_address(im.opts.bind_address);

  auto on_tcp = [&im](tcp::socket s) {
    std::make_shared<TcpConnection>(std::move(s), im.broker, im.opts.queue_capacity)->start();
  };
  auto on_http = [&im](tcp::socket s) { std::make_shared<HttpConnection>(std::move(s), im.broker, im.opts, im.service)->start(); };
  auto tcp_listener = std::make_shared<Listener<decltype(on_tcp)>>(im.ioc, tcp::endpoint(addr, im.opts.bus_port), on_tcp);
  auto http_listener = std::make_shared<Listener<decltype(on_http)>>(im.ioc, tcp::endpoint(addr, im.opts.http_port), on_http);
  im.bus_port = tcp_listener->port();
  im.http_port = http_listener->port();
  tcp_listener->run();
  http_listener->run();
  im.close_listeners = [tcp_listener, http_listener] {
    tcp_listener->close();
    http_listener->close();
  };

  im.work.emplace(im.ioc.get_executor());
  for (int i = 0; i < std::max(1, im.opts.io_threads); ++i) im.threads.emplace_back([&im] { im.ioc.run(); });
  im.running = true;
}

void BusServer::stop() {
  auto& im = *impl_;
  if (!im.running) return;
  im.work.reset();
  im.ioc.stop();
  for (auto& t : im.threads) t.join();
  im.threads.clear();
  im.close_listeners();
  im.running = false;
}

std::uint16_t BusServer::bus_port() const { return impl_->bus_port; }
std::uint16_t BusServer::http_port() const { return impl_->http_port; }

// ---------------------------------------------------------------------------
// Client

struct BusClient::Impl {
  asio::io_context ioc;
  tcp::socket socket{ioc};
  std::mutex write_mu;
  std::thread reader;
  std::mutex mu;
  std::condition_variable cv;
  std::deque<json> inbox;
  bool closed = true;
};

BusClient::BusClient() : impl_(std::make_unique<Impl>()) {}
BusClient::~BusClient() { close(); }

void BusClient::connect(const std::string& host, std::uint16_t port) {
  tcp::resolver resolver(impl_->ioc);
  asio::connect(impl_->socket, resolver.resolve(host, std::to_string(port)));
  impl_->socket.set_option(tcp::no_delay(true));
  impl_->closed = false;
  impl_->reader = std::thread([im = impl_.get()] {
    FrameDecoder decoder;
    std::array<char, 8192> buf{};
    for (;;) {
      beast::error_code ec;
      const std::size_t n = im->socket.read_some(asio::buffer(buf), ec);
      if (ec) break;
      decoder.feed(std::string_view(buf.data(), n));
      while (auto frame = decoder.next()) {
        json msg = json::parse(*frame, nullptr, false);
        if (msg.is_discarded()) continue;
        std::lock_guard lock(im->mu);
        im->inbox.push_back(std::move(msg));
        im->cv.notify_one();
      }
    }
    std::lock_guard lock(im->mu);
    im->closed = true;
    im->cv.notify_all();
  });
}

void BusClient::close() {
  if (impl_->reader.joinable()) {
    beast::error_code ignored;
    impl_->socket.shutdown(tcp::socket::shutdown_both, ignored);
    impl_->socket.close(ignored);
    impl_->reader.join();
  }
}

void BusClient::send(const json& message) {
  const auto frame = encode_frame(message.dump());
  std::lock_guard lock(impl_->write_mu);
  asio::write(impl_->socket, asio::buffer(frame));
}

void BusClient::publish(const Envelope& env, bool want_ack) {
  send(json{{"op", "publish"}, {"env", envelope_to_json(env)}, {"ack", want_ack}});
}

void BusClient::subscribe(const std::string& device) { send(json{{"op", "subscribe"}, {"device", device}}); }

std::optional<json> BusClient::receive(std::chrono::milliseconds timeout) {
  std::unique_lock lock(impl_->mu);
  if (!impl_->cv.wait_for(lock, timeout, [&] { return !impl_->inbox.empty() || impl_->closed; })) return std::nullopt;
  if (impl_->inbox.empty()) return std::nullopt;
  json msg = std::move(impl_->inbox.front());
  impl_->inbox.pop_front();
  return msg;
}

std::optional<Envelope> BusClient::receive_envelope(std::chrono::milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  for (;;) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() < 0) return std::nullopt;
    auto msg = receive(left);
    if (!msg) return std::nullopt;
    if (msg->value("op", "") == "deliver") return envelope_from_json(msg->at("env"));
  }
}

}  // namespace tims::bus
