#pragma once

// Message substrate for the secure-sum rounds. Two implementations share the
// Endpoint interface: an in-process bus (LocalBus, deterministic, no threads)
// and a TCP node (tcp.hpp). Protocol code is written against Endpoint only,
// so both transports run the identical message sequence.

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <stdexcept>
#include <vector>

#include "cgd/wire.hpp"

namespace cgd {

struct TransportError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TranscriptEntry {
    bool outgoing = false;
    WireMessage msg;

    bool operator==(const TranscriptEntry&) const = default;
};

using Transcript = std::vector<TranscriptEntry>;

class Endpoint {
  public:
    virtual ~Endpoint() = default;
    virtual uint16_t id() const = 0;
    virtual void send(const WireMessage& m) = 0;
    // Removes and returns the first queued message matching all five fields.
    // Blocks on transports with real latency; fails if nothing can arrive.
    virtual WireMessage recv_match(MsgKind kind, uint32_t round, uint8_t layer_tag,
                                   uint16_t group_tag, uint16_t sender) = 0;
    virtual const Transcript& transcript() const = 0;
};

class Bus {
  public:
    virtual ~Bus() = default;
    virtual Endpoint& endpoint(uint16_t id) = 0;
    virtual std::vector<uint16_t> ids() const = 0;
};

// Deterministic in-process bus: send() appends to the recipient's FIFO inbox
// immediately; recv_match() never waits (the round driver sequences phases so
// every expected message is already queued).
class LocalBus : public Bus {
  public:
    explicit LocalBus(const std::vector<uint16_t>& participant_ids, bool record = false);
    ~LocalBus() override;

    Endpoint& endpoint(uint16_t id) override;
    const Endpoint& endpoint(uint16_t id) const;
    std::vector<uint16_t> ids() const override;

  private:
    class Node;
    friend class Node;
    std::map<uint16_t, std::unique_ptr<Node>> nodes_;
    bool record_;
};

}  // namespace cgd
