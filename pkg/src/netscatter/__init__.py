"""
Distributed chirp-spread-spectrum backscatter network simulator

``netscatter`` simulates, at complex baseband, a network of backscatter devices
that transmit concurrently on cyclic shifts of a shared chirp with ON-OFF
keying, together with the receiver that separates them, the channel between
them and the access point, and the protocol that assigns shifts and power
levels.  It also reproduces the throughput, latency and near-far experiments
used to evaluate such networks.
"""

from importlib.metadata import version

__version__ = version("netscatter")
__license__ = "MIT"
