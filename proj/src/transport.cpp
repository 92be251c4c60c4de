#include "cgd/transport.hpp"

#include <string>

namespace cgd {

class LocalBus::Node : public Endpoint {
  public:
    Node(LocalBus& bus, uint16_t id) : bus_(bus), id_(id) {}

    uint16_t id() const override { return id_; }

    void send(const WireMessage& m) override {
        auto it = bus_.nodes_.find(m.recipient);
        if (it == bus_.nodes_.end())
            throw TransportError("send to unregistered participant " + std::to_string(m.recipient));
        if (bus_.record_) {
            transcript_.push_back({true, m});
            it->second->transcript_.push_back({false, m});
        }
        it->second->inbox_.push_back(m);
    }

    WireMessage recv_match(MsgKind kind, uint32_t round, uint8_t layer_tag,
                           uint16_t group_tag, uint16_t sender) override {
        for (auto it = inbox_.begin(); it != inbox_.end(); ++it) {
            if (it->kind == kind && it->round == round && it->layer_tag == layer_tag &&
                it->group_tag == group_tag && it->sender == sender) {
                WireMessage m = std::move(*it);
                inbox_.erase(it);
                return m;
            }
        }
        throw TransportError(std::string("no ") + kind_name(kind) + " from " +
                             std::to_string(sender) + " for participant " + std::to_string(id_) +
                             " in round " + std::to_string(round));
    }

    const Transcript& transcript() const override { return transcript_; }

  private:
    friend class LocalBus;
    LocalBus& bus_;
    uint16_t id_;
    std::deque<WireMessage> inbox_;
    Transcript transcript_;
};

LocalBus::LocalBus(const std::vector<uint16_t>& participant_ids, bool record) : record_(record) {
    for (uint16_t id : participant_ids) {
        if (nodes_.count(id)) throw TransportError("duplicate participant id " + std::to_string(id));
        nodes_.emplace(id, std::make_unique<Node>(*this, id));
    }
}

LocalBus::~LocalBus() = default;

Endpoint& LocalBus::endpoint(uint16_t id) {
    auto it = nodes_.find(id);
    if (it == nodes_.end()) throw TransportError("unknown participant " + std::to_string(id));
    return *it->second;
}

const Endpoint& LocalBus::endpoint(uint16_t id) const {
    auto it = nodes_.find(id);
    if (it == nodes_.end()) throw TransportError("unknown participant " + std::to_string(id));
    return *it->second;
}

std::vector<uint16_t> LocalBus::ids() const {
    std::vector<uint16_t> out;
    out.reserve(nodes_.size());
    for (const auto& [id, node] : nodes_) out.push_back(id);
    return out;
}

}  // namespace cgd
