"""
UDP echo responder

Reflects every datagram to its sender, optionally after a fixed
turnaround delay and with the first byte rewritten through a map such as
``01:02,04:03``. With a rewrite map and a fixed reply address it stands in
for a hardware crossing controller.

Usage:
    python -m iotstage.integrations.udp_echo --port 9000 --delay-ms 2
"""

import argparse
import logging
import socket
import threading
import time
from typing import Dict, Optional, Tuple

logger = logging.getLogger(__name__)


def parse_rewrite(text: Optional[str]) -> Dict[int, int]:
    """Parse ``01:02,04:03`` (hex bytes) into {0x01: 0x02, 0x04: 0x03}."""
    if not text:
        return {}
    mapping = {}
    for pair in text.split(","):
        src, sep, dst = pair.strip().partition(":")
        if not sep:
            raise ValueError(f"bad rewrite pair {pair!r}")
        mapping[int(src, 16)] = int(dst, 16)
    return mapping


class EchoResponder:
    """Background UDP echo server"""

    def __init__(
        self,
        host: str = "127.0.0.1",
        port: int = 0,
        delay_ms: float = 0.0,
        rewrite: Optional[Dict[int, int]] = None,
        reply_to: Optional[Tuple[str, int]] = None,
    ):
        """
        Initialize the responder

        Args:
            host: Bind address
            port: Bind port (0 picks a free one)
            delay_ms: Turnaround delay before each reply
            rewrite: First-byte rewrite map
            reply_to: Fixed reply address instead of the datagram's source
        """
        self.delay = delay_ms / 1000.0
        self.rewrite = dict(rewrite or {})
        self.reply_to = reply_to
        self.received = 0
        self.sent = 0

        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self._sock.bind((host, port))
        self._sock.settimeout(0.05)
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None

    @property
    def address(self) -> Tuple[str, int]:
        return self._sock.getsockname()

    def transform(self, datagram: bytes) -> bytes:
        if datagram and datagram[0] in self.rewrite:
            return bytes((self.rewrite[datagram[0]],)) + datagram[1:]
        return datagram

    def start(self) -> "EchoResponder":
        self._thread = threading.Thread(target=self.serve, name="udp-echo", daemon=True)
        self._thread.start()
        return self

    def serve(self) -> None:
        while not self._stop.is_set():
            try:
                datagram, source = self._sock.recvfrom(65535)
            except socket.timeout:
                continue
            except OSError:
                if self._stop.is_set():
                    return
                raise
            self.received += 1
            if self.delay:
                time.sleep(self.delay)
            self._sock.sendto(self.transform(datagram), self.reply_to or source)
            self.sent += 1

    def stop(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=1.0)
            self._thread = None
        self._sock.close()

    def __enter__(self) -> "EchoResponder":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="UDP echo responder")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, required=True)
    parser.add_argument("--delay-ms", type=float, default=0.0)
    parser.add_argument("--rewrite", help="first-byte map, e.g. 01:02,04:03")
    parser.add_argument("--reply-to", help="fixed reply address host:port")
    args = parser.parse_args(argv)

    reply_to = None
    if args.reply_to:
        host, _, port = args.reply_to.rpartition(":")
        reply_to = (host, int(port))

    responder = EchoResponder(
        args.host, args.port, args.delay_ms, parse_rewrite(args.rewrite), reply_to
    )
    logger.info("Echo responder listening", extra={"address": responder.address})
    try:
        responder.serve()
    except KeyboardInterrupt:
        pass
    finally:
        responder.stop()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
