#pragma once

// TCP transport: one listener per participant, persistent connections, the
// wire format from wire.hpp on the stream. A TcpNode is an Endpoint whose
// connect_all() must run on the thread that will use it (it blocks until the
// full mesh is up: this node dials every lower id and waits for every higher
// id to dial in; dialers introduce themselves with a 2-byte big-endian id).

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "cgd/secure_sum.hpp"
#include "cgd/transport.hpp"

namespace cgd {

struct TcpPeer {
    std::string host;
    uint16_t port = 0;
};

class TcpNode : public Endpoint {
  public:
    // `peers` maps every session id (including this node's) to its address.
    TcpNode(uint16_t id, std::map<uint16_t, TcpPeer> peers, bool record = false,
            int timeout_ms = 30000);
    ~TcpNode() override;

    TcpNode(const TcpNode&) = delete;
    TcpNode& operator=(const TcpNode&) = delete;

    void connect_all();

    uint16_t id() const override { return id_; }
    void send(const WireMessage& m) override;
    WireMessage recv_match(MsgKind kind, uint32_t round, uint8_t layer_tag, uint16_t group_tag,
                           uint16_t sender) override;
    const Transcript& transcript() const override { return transcript_; }

  private:
    void accept_loop();
    void reader_loop(uint16_t peer, int fd);
    void register_peer(uint16_t peer, int fd);

    uint16_t id_;
    std::map<uint16_t, TcpPeer> peers_;
    bool record_;
    int timeout_ms_;
    int listen_fd_ = -1;
    std::thread accept_thread_;
    std::vector<std::thread> readers_;

    std::mutex mu_;
    std::condition_variable cv_;
    std::map<uint16_t, int> conn_;
    std::map<uint16_t, std::unique_ptr<std::mutex>> write_mu_;
    std::deque<WireMessage> inbox_;
    Transcript transcript_;
    bool closing_ = false;
};

struct TcpEndpointSpec {
    uint16_t id = 0;
    std::string host;
    uint16_t port = 0;
};

// Reads lines of the form "<id> <host> <port>"; '#' starts a comment.
std::vector<TcpEndpointSpec> parse_endpoints_file(const std::string& path);

// Runs every session participant as a TcpNode on its own thread, executing
// secure-sum rounds dispatched from the caller's thread.
class TcpExecutor : public RoundExecutor {
  public:
    TcpExecutor(const std::vector<TcpEndpointSpec>& specs, const SessionConfig& cfg,
                bool record = false, int timeout_ms = 30000);
    ~TcpExecutor() override;

    std::map<uint16_t, SlotResults> execute(uint32_t round, const std::vector<SumSlot>& slots,
                                            const std::map<uint16_t, SlotInputs>& inputs) override;
    std::vector<uint16_t> ids() const override;
    std::map<uint16_t, Transcript> transcripts() const override;
    uint64_t clipped() const override { return clipped_; }

  private:
    struct Worker;
    SessionConfig cfg_;
    std::vector<uint16_t> ids_;
    std::vector<std::unique_ptr<Worker>> workers_;
    uint64_t clipped_ = 0;
};

}  // namespace cgd
