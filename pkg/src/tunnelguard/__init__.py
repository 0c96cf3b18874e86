"""Userspace secure-tunnel simulator for building telemetry networks.

The package bundles four layers that compose into runnable scenarios:

* ``tunnelguard.tunnel``  - wire codecs, payload sealing, endpoint state machine
* ``tunnelguard.netsim``  - deterministic virtual network with capture taps
* ``tunnelguard.devices`` - simulated room controllers and their sensors
* ``tunnelguard.server``  - telemetry store, rule engine, HTTP control API

Everything runs on virtual time and seeded randomness, so a scenario run
is reproducible byte for byte.
"""

__version__ = "0.1.0"
