"""Configuration dict for the package.

 - `ports`: int - replication count of `[*]` scopes (the ring stops of the
 showcase design). Must be >= 2 for ring designs.

 - `tag_width`: int - width in bits of the `$tag` field the router testbench
 attaches to every generated transaction.

 - `injection_probability`: float - per-cycle, per-stop probability that the
 testbench generator offers a new transaction.

 - `backpressure_probability`: float - per-cycle probability that a testbench
 checker deasserts its ready. 0 by default (the sink is always ready).

 - `cycles`, `seed`, `drain_timeout`: default simulation length, PRNG seed and
 the number of extra cycles allowed for draining in-flight transactions.

 - `indent_width`: int - indentation unit of the canonical source printer.

 - `intrinsics`: Tuple[str] of built-in functions callable from expressions.

 - `default_trans_scope`: str - transaction scope name used when a component
 argument list omits it.

 - `arb2_priority`: str - which arb2 input wins when both are valid; "in1"
 is the ring side in the showcase.

 - `mutations`: Tuple[str] of fault-injection hooks applied while building the
 netlist (see `staging`); empty for normal builds.

 - `field_defaults`: Tuple[str] of field names fed a constant 0 on flow paths
 that reach a source without a producer.

 - `handshake_names`: Tuple[str] of flow-control signal names. Assigning one
 inside a transaction scope is a flow error.

 - `verilog_module_name`: str - module name used when none is given.
"""

CONFIG = {
    "ports": 4,
    "tag_width": 32,
    "injection_probability": 0.5,
    "backpressure_probability": 0.0,
    "cycles": 10000,
    "seed": 1,
    "drain_timeout": 2000,
    "indent_width": 3,
    "intrinsics": ("sqrt",),
    "default_trans_scope": "trans",
    "arb2_priority": "in1",
    "mutations": (),
    "field_defaults": (),
    "handshake_names": ("valid", "ready", "stall"),
    "verilog_module_name": "top",
}
