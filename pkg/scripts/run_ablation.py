#!/usr/bin/env python3
"""
Edge-feature and architecture ablations on the desk benchmark.

Trains one model per variant on the same corpus and seed, evaluates each on
the held-out split and writes a comparison table to
<out>/ablation.parquet (plus ablation.json).

Usage:
    python scripts/run_ablation.py --config configs/desk.json
    python scripts/run_ablation.py --config configs/desk.json --variants pair pair+rel
"""

import argparse
import logging
import os
import sys
from dataclasses import replace

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from config import load_run_config
from errors import P2GError
from pipeline import cmd_eval, cmd_train, setup_logging
from stages.WriteStage import WriteStage

logger = logging.getLogger('ablation')

# model overrides per variant
VARIANTS = {
    'pair': {'use_rope': False, 'use_rel': False},
    'pair+rel': {'use_rope': False, 'use_rel': True},
    'pair+rope': {'use_rope': True, 'use_rel': False},
    'full': {},
    'full+polar': {'use_polar': True},
    'full+node-class': {'use_node_class': True},
    'box-four': {'box_info_mode': 'four'},
    'no-residual': {'gnn_residual': False},
    'static-graph': {'graph_refresh': ('static', 'static')},
    'raw-image': {'image_provider': 'raw'},
}


def run_variant(base_cfg, name, overrides, out_root):
    model = replace(base_cfg.model, **overrides)
    cfg = replace(base_cfg, model=model, output_dir=os.path.join(out_root, name))
    logger.info(f"Variant {name}: {overrides or 'defaults'}")
    cmd_train(cfg, progress=False)
    metrics = cmd_eval(cfg)
    return {
        'variant': name,
        'node_f1': metrics['node']['f1'],
        'edge_f1': metrics['edge']['f1'],
        'edge_precision': metrics['edge']['precision'],
        'edge_recall': metrics['edge']['recall'],
        'map': metrics['map']['map'],
    }


def main():
    parser = argparse.ArgumentParser(description='Run edge-feature and architecture ablations')
    parser.add_argument('--config', default='configs/desk.json', help='Base RunConfig')
    parser.add_argument('--out', default='runs/ablation', help='Output root')
    parser.add_argument('--variants', nargs='+', default=['pair', 'pair+rel'], choices=sorted(VARIANTS),
                        help='Variants to train')
    args = parser.parse_args()

    setup_logging()
    base = load_run_config(args.config)

    rows = []
    try:
        for name in args.variants:
            rows.append(run_variant(base, name, VARIANTS[name], args.out))
    except P2GError as e:
        logger.error(f"{e.category} error: {e}")
        return e.exit_code

    writer = WriteStage()
    writer.initialize({'out_dir': args.out})
    writer.write_table('ablation', rows)
    writer.write_json('ablation.json', {'config': args.config, 'seed': base.seed, 'variants': rows})

    print()
    print(f"{'variant':<18} {'node F1':>8} {'edge F1':>8} {'mAP':>8}")
    for row in rows:
        print(f"{row['variant']:<18} {row['node_f1']:>8.4f} {row['edge_f1']:>8.4f} {row['map']:>8.4f}")

    by_name = {row['variant']: row for row in rows}
    if 'pair' in by_name and 'pair+rel' in by_name:
        margin = by_name['pair+rel']['edge_f1'] - by_name['pair']['edge_f1']
        print(f"\nRelation features edge F1 margin: {margin:+.4f}")
        if margin <= 0:
            logger.warning("relation features did not improve edge F1 on this seed")
            return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
