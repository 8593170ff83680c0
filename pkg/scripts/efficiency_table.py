#!/usr/bin/env python3
"""Print the parameter/MAC accounting table for the built-in presets."""

from frenet.analyze import count_params_macs, format_efficiency_report
from frenet.arch import frenet_config, frenet_plus_config, tiny_config


def main():
    for make in (frenet_config, frenet_plus_config):
        cfg = make()
        print(format_efficiency_report(cfg, count_params_macs(cfg)))
        print()
    cfg = tiny_config(base_size=32)
    print(format_efficiency_report(cfg, count_params_macs(cfg)))


if __name__ == "__main__":
    main()
