#include "cgd/tcp.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cstring>
#include <fstream>
#include <sstream>

namespace cgd {

namespace {

void write_all(int fd, const uint8_t* data, size_t n) {
    while (n > 0) {
        ssize_t w = ::send(fd, data, n, MSG_NOSIGNAL);
        if (w <= 0) throw TransportError("tcp write failed");
        data += w;
        n -= size_t(w);
    }
}

bool read_all(int fd, uint8_t* data, size_t n) {
    while (n > 0) {
        ssize_t r = ::recv(fd, data, n, 0);
        if (r <= 0) return false;
        data += r;
        n -= size_t(r);
    }
    return true;
}

sockaddr_in make_addr(const std::string& host, uint16_t port) {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
        throw TransportError("bad address " + host);
    return addr;
}

}  // namespace

TcpNode::TcpNode(uint16_t id, std::map<uint16_t, TcpPeer> peers, bool record, int timeout_ms)
    : id_(id), peers_(std::move(peers)), record_(record), timeout_ms_(timeout_ms) {
    auto self = peers_.find(id_);
    if (self == peers_.end()) throw TransportError("own id missing from peer table");

    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw TransportError("socket failed");
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    const char* bind_host = std::getenv("CGD_BIND_ADDR");
    sockaddr_in addr = make_addr(bind_host ? bind_host : self->second.host, self->second.port);
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
        ::close(listen_fd_);
        throw TransportError("bind failed on port " + std::to_string(self->second.port));
    }
    if (::listen(listen_fd_, int(peers_.size())) != 0) {
        ::close(listen_fd_);
        throw TransportError("listen failed");
    }
    accept_thread_ = std::thread([this] { accept_loop(); });
}

TcpNode::~TcpNode() {
    {
        std::lock_guard lk(mu_);
        closing_ = true;
    }
    if (listen_fd_ >= 0) {
        ::shutdown(listen_fd_, SHUT_RDWR);
        ::close(listen_fd_);
    }
    {
        std::lock_guard lk(mu_);
        for (auto& [peer, fd] : conn_) {
            ::shutdown(fd, SHUT_RDWR);
            ::close(fd);
        }
    }
    if (accept_thread_.joinable()) accept_thread_.join();
    for (auto& t : readers_)
        if (t.joinable()) t.join();
}

void TcpNode::register_peer(uint16_t peer, int fd) {
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    std::lock_guard lk(mu_);
    if (closing_) {
        ::close(fd);
        return;
    }
    conn_[peer] = fd;
    write_mu_[peer] = std::make_unique<std::mutex>();
    readers_.emplace_back([this, peer, fd] { reader_loop(peer, fd); });
    cv_.notify_all();
}

void TcpNode::accept_loop() {
    for (;;) {
        int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0) return;
        uint8_t hello[2];
        if (!read_all(fd, hello, 2)) {
            ::close(fd);
            continue;
        }
        register_peer(uint16_t(hello[0]) << 8 | hello[1], fd);
    }
}

void TcpNode::reader_loop(uint16_t peer, int fd) {
    for (;;) {
        uint8_t len_buf[4];
        if (!read_all(fd, len_buf, 4)) return;
        uint32_t length = uint32_t(len_buf[0]) << 24 | uint32_t(len_buf[1]) << 16 |
                          uint32_t(len_buf[2]) << 8 | len_buf[3];
        if (length < kHeaderAfterLength || length > (64u << 20)) return;
        std::vector<uint8_t> frame(4 + length);
        std::memcpy(frame.data(), len_buf, 4);
        if (!read_all(fd, frame.data() + 4, length)) return;
        WireMessage m;
        try {
            m = decode_frame(frame);
        } catch (const WireError&) {
            return;
        }
        std::lock_guard lk(mu_);
        if (record_) transcript_.push_back({false, m});
        inbox_.push_back(std::move(m));
        cv_.notify_all();
        (void)peer;
    }
}

void TcpNode::connect_all() {
    using clock = std::chrono::steady_clock;
    auto deadline = clock::now() + std::chrono::milliseconds(timeout_ms_);
    for (const auto& [peer, ep] : peers_) {
        if (peer >= id_) continue;
        int fd = -1;
        for (;;) {
            fd = ::socket(AF_INET, SOCK_STREAM, 0);
            if (fd < 0) throw TransportError("socket failed");
            sockaddr_in addr = make_addr(ep.host, ep.port);
            if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0) break;
            ::close(fd);
            if (clock::now() > deadline)
                throw TransportError("connect to participant " + std::to_string(peer) + " timed out");
            std::this_thread::sleep_for(std::chrono::milliseconds(10));
        }
        uint8_t hello[2] = {uint8_t(id_ >> 8), uint8_t(id_)};
        write_all(fd, hello, 2);
        register_peer(peer, fd);
    }
    std::unique_lock lk(mu_);
    if (!cv_.wait_until(lk, deadline, [this] { return conn_.size() == peers_.size() - 1; }))
        throw TransportError("peer mesh incomplete for participant " + std::to_string(id_));
}

void TcpNode::send(const WireMessage& m) {
    std::vector<uint8_t> frame = encode_frame(m);
    int fd;
    std::mutex* wmu;
    {
        std::lock_guard lk(mu_);
        auto it = conn_.find(m.recipient);
        if (it == conn_.end())
            throw TransportError("send to unconnected participant " + std::to_string(m.recipient));
        fd = it->second;
        wmu = write_mu_.at(m.recipient).get();
        if (record_) transcript_.push_back({true, m});
    }
    std::lock_guard wl(*wmu);
    write_all(fd, frame.data(), frame.size());
}

WireMessage TcpNode::recv_match(MsgKind kind, uint32_t round, uint8_t layer_tag,
                                uint16_t group_tag, uint16_t sender) {
    auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms_);
    std::unique_lock lk(mu_);
    for (;;) {
        for (auto it = inbox_.begin(); it != inbox_.end(); ++it) {
            if (it->kind == kind && it->round == round && it->layer_tag == layer_tag &&
                it->group_tag == group_tag && it->sender == sender) {
                WireMessage m = std::move(*it);
                inbox_.erase(it);
                return m;
            }
        }
        if (cv_.wait_until(lk, deadline) == std::cv_status::timeout)
            throw TransportError(std::string("timeout waiting for ") + kind_name(kind) +
                                 " from " + std::to_string(sender) + " in round " +
                                 std::to_string(round));
    }
}

std::vector<TcpEndpointSpec> parse_endpoints_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw TransportError("cannot open endpoints file " + path);
    std::vector<TcpEndpointSpec> specs;
    std::string line;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        TcpEndpointSpec spec;
        int id, port;
        if (!(ls >> id >> spec.host >> port)) continue;
        spec.id = uint16_t(id);
        spec.port = uint16_t(port);
        specs.push_back(std::move(spec));
    }
    if (specs.empty()) throw TransportError("endpoints file " + path + " lists no endpoints");
    return specs;
}

struct TcpExecutor::Worker {
    std::unique_ptr<TcpNode> node;
    std::thread thread;

    std::mutex mu;
    std::condition_variable cv;
    bool has_task = false;
    bool stop = false;
    uint32_t round = 0;
    const std::vector<SumSlot>* slots = nullptr;
    SlotInputs inputs;
    SlotResults results;
    uint64_t clipped = 0;
    std::exception_ptr error;
    bool done = false;

    void run(const SessionConfig& cfg, const std::vector<uint16_t>& all_ids) {
        try {
            node->connect_all();
        } catch (...) {
            std::lock_guard lk(mu);
            error = std::current_exception();
            done = true;
            cv.notify_all();
            return;
        }
        for (;;) {
            std::unique_lock lk(mu);
            cv.wait(lk, [this] { return has_task || stop; });
            if (stop) return;
            has_task = false;
            uint32_t r = round;
            const std::vector<SumSlot>* sl = slots;
            SlotInputs in = std::move(inputs);
            lk.unlock();
            SlotResults res;
            std::exception_ptr err;
            uint64_t clip = 0;
            try {
                res = run_round(*node, cfg, r, *sl, std::move(in), all_ids, &clip);
            } catch (...) {
                err = std::current_exception();
            }
            lk.lock();
            results = std::move(res);
            clipped += clip;
            error = err;
            done = true;
            cv.notify_all();
        }
    }
};

TcpExecutor::TcpExecutor(const std::vector<TcpEndpointSpec>& specs, const SessionConfig& cfg,
                         bool record, int timeout_ms)
    : cfg_(cfg) {
    std::map<uint16_t, TcpPeer> peers;
    for (const auto& s : specs) peers[s.id] = {s.host, s.port};
    if (peers.size() != specs.size()) throw TransportError("duplicate ids in endpoint specs");
    for (const auto& [id, p] : peers) ids_.push_back(id);

    for (uint16_t id : ids_) {
        auto w = std::make_unique<Worker>();
        w->node = std::make_unique<TcpNode>(id, peers, record, timeout_ms);
        workers_.push_back(std::move(w));
    }
    for (auto& w : workers_)
        w->thread = std::thread([this, worker = w.get()] { worker->run(cfg_, ids_); });
}

TcpExecutor::~TcpExecutor() {
    for (auto& w : workers_) {
        std::lock_guard lk(w->mu);
        w->stop = true;
        w->cv.notify_all();
    }
    for (auto& w : workers_)
        if (w->thread.joinable()) w->thread.join();
}

std::map<uint16_t, SlotResults> TcpExecutor::execute(uint32_t round,
                                                     const std::vector<SumSlot>& slots,
                                                     const std::map<uint16_t, SlotInputs>& inputs) {
    for (size_t i = 0; i < workers_.size(); ++i) {
        Worker& w = *workers_[i];
        std::lock_guard lk(w.mu);
        if (w.error) std::rethrow_exception(w.error);
        w.round = round;
        w.slots = &slots;
        auto it = inputs.find(ids_[i]);
        if (it != inputs.end())
            w.inputs = it->second;
        else
            w.inputs = SlotInputs(slots.size());
        w.done = false;
        w.has_task = true;
        w.cv.notify_all();
    }
    std::map<uint16_t, SlotResults> out;
    for (size_t i = 0; i < workers_.size(); ++i) {
        Worker& w = *workers_[i];
        std::unique_lock lk(w.mu);
        w.cv.wait(lk, [&w] { return w.done; });
        if (w.error) {
            auto err = w.error;
            w.error = nullptr;
            lk.unlock();
            std::rethrow_exception(err);
        }
        clipped_ += w.clipped;
        w.clipped = 0;
        out[ids_[i]] = std::move(w.results);
    }
    return out;
}

std::vector<uint16_t> TcpExecutor::ids() const { return ids_; }

std::map<uint16_t, Transcript> TcpExecutor::transcripts() const {
    std::map<uint16_t, Transcript> out;
    for (size_t i = 0; i < workers_.size(); ++i) out[ids_[i]] = workers_[i]->node->transcript();
    return out;
}

}  // namespace cgd
