"""
Hardware-in-the-loop UDP gateway

Each external node owns one UDP socket bound to its listen port. Datagrams
arriving there are queued as injection requests and broadcast into the
simulated network at the start of the next window; deliveries addressed to
the node are written verbatim to its peer address.
"""

import logging
import queue
import select
import socket
import threading
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple

from iotstage.config import Config
from iotstage.models.scenario import NodeSpec
from iotstage.services.netsim import BROADCAST, Packet
from iotstage.services.pacing import Pacer
from iotstage.utils.exceptions import GatewayError
from iotstage.utils.metrics import track_datagram

logger = logging.getLogger(__name__)

MAX_DATAGRAM = 65507


def parse_peer(peer: str) -> Tuple[str, int]:
    """Split ``host:port``."""
    host, sep, port = peer.rpartition(":")
    if not sep or not host or not port.isdigit() or not 0 < int(port) < 65536:
        raise ValueError(f"not an address:port: {peer!r}")
    return host, int(port)


@dataclass
class ExternalEndpoint:
    """Socket and counters of one external node"""

    node_id: str
    listen_port: int
    peer: Tuple[str, int]
    sock: Optional[socket.socket] = None
    datagrams_in: int = 0
    datagrams_out: int = 0
    rejected: int = 0
    last_origin_stamp: Optional[int] = None

    @classmethod
    def from_spec(cls, spec: NodeSpec) -> "ExternalEndpoint":
        return cls(spec.id, spec.external.listen_port, parse_peer(spec.external.peer))

    def stats(self) -> Dict[str, int]:
        return {"in": self.datagrams_in, "out": self.datagrams_out, "rejected": self.rejected}


@dataclass(frozen=True)
class InjectionRequest:
    node_id: str
    payload: bytes
    dst: str = BROADCAST
    origin_stamp: Optional[int] = None


@dataclass(frozen=True)
class GatewayWarning:
    reason: str
    node_id: str
    detail: Dict = field(default_factory=dict)


class HilGateway:
    """UDP bridge between external devices and the simulated network"""

    def __init__(
        self,
        nodes: Iterable[NodeSpec],
        host: Optional[str] = None,
        poll_ms: Optional[int] = None,
        pacer: Optional[Pacer] = None,
    ):
        """
        Initialize the gateway

        Args:
            nodes: External node specs, one endpoint each
            host: Bind address for the listen sockets
            poll_ms: Reader wake-up interval
            pacer: Wall-clock pacer used to time egress
        """
        self.host = host or Config.GATEWAY_HOST
        self.poll = (poll_ms if poll_ms is not None else Config.GATEWAY_POLL_MS) / 1000.0
        self.pacer = pacer
        self.endpoints: Dict[str, ExternalEndpoint] = {
            spec.id: ExternalEndpoint.from_spec(spec) for spec in nodes
        }
        self.error: Optional[BaseException] = None

        self._injections: "queue.Queue[InjectionRequest]" = queue.Queue()
        self._warnings: "queue.Queue[GatewayWarning]" = queue.Queue()
        self._lock = threading.Lock()
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None

    @property
    def running(self) -> bool:
        return self._thread is not None and self._thread.is_alive()

    def start(self) -> None:
        """
        Bind every listen socket and start the reader thread

        Raises:
            GatewayError: a socket could not be bound
        """
        try:
            for endpoint in self.endpoints.values():
                sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
                endpoint.sock = sock
                sock.bind((self.host, endpoint.listen_port))
        except OSError as e:
            self.stop()
            raise GatewayError(f"cannot bind gateway socket: {e}") from e

        self._stop.clear()
        self._thread = threading.Thread(target=self._read_loop, name="hil-gateway", daemon=True)
        self._thread.start()
        logger.info(
            "Gateway started",
            extra={"endpoints": {n: e.listen_port for n, e in self.endpoints.items()}},
        )

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=max(1.0, 5 * self.poll))
            self._thread = None
        for endpoint in self.endpoints.values():
            if endpoint.sock is not None:
                endpoint.sock.close()
                endpoint.sock = None

    def ingress(self, datagram: bytes, endpoint: ExternalEndpoint) -> Optional[InjectionRequest]:
        """
        Queue a datagram received from a device

        The listen port identifies the node; the sender address is ignored.
        Oversize datagrams are dropped with a warning.
        """
        if len(datagram) > MAX_DATAGRAM:
            endpoint.rejected += 1
            track_datagram("rejected")
            self._warnings.put(
                GatewayWarning("OVERSIZE_DATAGRAM", endpoint.node_id, {"size_bytes": len(datagram)})
            )
            return None
        with self._lock:
            stamp = endpoint.last_origin_stamp
        request = InjectionRequest(endpoint.node_id, bytes(datagram), origin_stamp=stamp)
        endpoint.datagrams_in += 1
        track_datagram("in")
        self._injections.put(request)
        return request

    def drain(self) -> List[InjectionRequest]:
        """Everything queued so far, in arrival order."""
        drained = []
        while True:
            try:
                drained.append(self._injections.get_nowait())
            except queue.Empty:
                return drained

    def drain_warnings(self) -> List[GatewayWarning]:
        drained = []
        while True:
            try:
                drained.append(self._warnings.get_nowait())
            except queue.Empty:
                return drained

    def egress(self, packet: Packet, node_id: str, sim_now: Optional[int] = None) -> bool:
        """
        Write a delivered payload to the node's peer, unframed

        Waits for the delivery's wall-clock time first when pacing is on.
        Send failures become warnings; the run continues.
        """
        endpoint = self.endpoints[node_id]
        if self.pacer is not None and sim_now is not None:
            self.pacer.wait_for(sim_now)
        with self._lock:
            endpoint.last_origin_stamp = packet.origin_stamp
        if endpoint.sock is None:
            self._warnings.put(GatewayWarning("EGRESS_FAILED", node_id, {"error": "socket closed"}))
            return False
        try:
            endpoint.sock.sendto(packet.payload, endpoint.peer)
        except OSError as e:
            logger.warning("Egress failed", extra={"node": node_id, "error": str(e)})
            self._warnings.put(GatewayWarning("EGRESS_FAILED", node_id, {"error": str(e)}))
            return False
        endpoint.datagrams_out += 1
        track_datagram("out")
        return True

    def stats(self) -> Dict[str, Dict[str, int]]:
        return {node_id: e.stats() for node_id, e in sorted(self.endpoints.items())}

    def _read_loop(self) -> None:
        by_sock = {e.sock: e for e in self.endpoints.values() if e.sock is not None}
        try:
            while not self._stop.is_set():
                ready, _, _ = select.select(list(by_sock), [], [], self.poll)
                for sock in ready:
                    datagram, _ = sock.recvfrom(MAX_DATAGRAM + 1)
                    self.ingress(datagram, by_sock[sock])
        except (OSError, ValueError) as e:
            if not self._stop.is_set():
                logger.error("Gateway reader failed", exc_info=True)
                self.error = e
