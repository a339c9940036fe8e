"""
Pipeline entry point - Layout analysis commands.

Data flow of the evaluation and inference commands:
PageSource -> SampleStage -> InferStage -> WriteStage

Commands:
    synth      generate a synthetic corpus (train.jsonl, eval.jsonl)
    sample     run a graph sampler on pages and render boxes + edges as SVG
    train      train a model; metric log per epoch and checkpoints
    eval       score a checkpoint on a corpus split
    infer      decode layout instances of pages; JSON + SVG per page
    gradcheck  finite-difference check of the full model loss

Exit codes: 0 ok, 1 unexpected failure, 2 config error, 3 data error,
4 numeric failure.
"""

import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from typing import Dict, Iterator, List, Optional, Sequence

# Add current directory to path
sys.path.insert(0, os.path.dirname(__file__))

from config import RunConfig, load_run_config, write_resolved_config
from errors import ConfigMismatch, DataError, EmptyDataset, GradientMismatch, P2GError
from dataio.coco import export_coco, write_coco
from dataio.pages import category_count, category_names, load_page, parse_page, save_corpus, truncate_page
from dataio.synth import synth_generate
from layout.decode_eval import MatchResult, coco_map
from layout.doc_model import Page
from layout.sampling import STRATEGIES, sample_graph
from models.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from models.gnn_model import LayoutGraphModel, ModelConfig, forward, init_model, loss, prepare_page, train
from models.tensor_nn import grad_check
from render import render_prediction, render_sampled_graph, write_svg
from stages.InferStage import InferStage, PagePrediction
from stages.PageSource import PageSource
from stages.SampleStage import SampleStage
from stages.WriteStage import WriteStage

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
GRADCHECK_TOLERANCE = 1e-4
GRADCHECK_NODES = 6
MODEL_FILE = 'model.p2g'

logger = logging.getLogger('pipeline')


def setup_logging(level: Optional[str] = None, quiet: bool = False):
    level = (level or os.getenv('P2G_LOG_LEVEL') or 'INFO').upper()
    if quiet:
        level = 'WARNING'
    logging.basicConfig(level=getattr(logging, level, logging.INFO), format=LOG_FORMAT, force=True)


# Helpers

def _resolve(args) -> RunConfig:
    cfg = load_run_config(args.config, seed=args.seed, output_dir=args.out, workers=getattr(args, 'workers', None))
    overrides = {}
    if getattr(args, 'strategy', None):
        overrides['strategy'] = args.strategy
    if getattr(args, 'k', None) is not None:
        overrides['k'] = args.k
    if getattr(args, 'beta', None) is not None:
        overrides['beta'] = args.beta
    if overrides:
        cfg = replace(cfg, sampling=replace(cfg.sampling, **overrides))
    if getattr(args, 'level', None):
        cfg = replace(cfg, data=replace(cfg.data, level=args.level))
    return cfg


def _iter_pages(path: str, fmt: str, level: str, strict: bool) -> Iterator[Page]:
    """One page file, or every page of a corpus."""
    if os.path.isfile(path) and not path.endswith('.jsonl'):
        yield load_page(path, level)
        return
    source = PageSource()
    source.initialize({'path': path, 'format': fmt, 'level': level, 'strict': strict})
    yield from source.pages()


def _safe_name(page_id: str) -> str:
    return ''.join(c if c.isalnum() or c in '-_.' else '_' for c in page_id)


def _sum_matches(matches: Sequence[MatchResult]) -> MatchResult:
    total = MatchResult()
    for m in matches:
        total.tp += m.tp
        total.fp += m.fp
        total.fn += m.fn
        for c, pc in m.per_class.items():
            acc = total.per_class.setdefault(c, MatchResult())
            acc.tp += pc.tp
            acc.fp += pc.fp
            acc.fn += pc.fn
    return total



# Commands

def cmd_synth(cfg: RunConfig) -> Dict[str, int]:
    """Generate the train and eval splits of the synthetic corpus."""
    out_dir = cfg.output_dir
    write_resolved_config(cfg, out_dir)
    counts = {}
    for split in ('train', 'eval'):
        documents = synth_generate(cfg.synth, split)
        counts[split] = save_corpus(documents, os.path.join(out_dir, f'{split}.jsonl'))
    logger.info(f"Synthetic corpus written to {out_dir}: {counts}")
    return counts


def cmd_sample(cfg: RunConfig, page_path: str) -> List[Dict]:
    """Sample every input page, render it and report edge count and recall."""
    out_dir = cfg.output_dir
    write_resolved_config(cfg, out_dir)

    stage = SampleStage()
    stage.initialize({
        'strategy': cfg.sampling.strategy,
        'params': cfg.sampling.params(),
        'strict': True,
        'with_missing': True,
    })
    writer = WriteStage()
    writer.initialize({'out_dir': out_dir})

    rows = []
    for page in _iter_pages(page_path, cfg.data.format, cfg.data.level, strict=True):
        sampled = stage.process(page)
        svg_path = os.path.join(out_dir, f'{_safe_name(page.page_id)}.svg')
        write_svg(render_sampled_graph(page, sampled.graph, sampled.missing_pairs), svg_path)
        rows.append({
            'page_id': page.page_id,
            'strategy': cfg.sampling.strategy,
            'n_boxes': page.n_boxes,
            'n_edges': sampled.graph.n_edges,
            'group_connectivity': sampled.group_connectivity,
            'link_coverage': sampled.link_coverage,
            'missing_pairs': [list(p) for p in sampled.missing_pairs],
        })
        logger.info(
            f"{page.page_id}: {sampled.graph.n_edges} edges, "
            f"group_connectivity={sampled.group_connectivity}, link_coverage={sampled.link_coverage}"
        )
    if not rows:
        raise EmptyDataset(f"no pages in {page_path}")

    writer.write_json('sample_report.json', {'pages': rows, 'summary': stage.summary()})
    stage._log_statistics()
    return rows


def _check_categories(pages: Sequence[Page], model_cfg: ModelConfig, what: str):
    count = category_count(pages)
    if count != model_cfg.n_node_classes:
        raise ConfigMismatch(
            ['n_node_classes'],
            f"{what} uses {count} categories, model has {model_cfg.n_node_classes}",
        )


def _sample_all(pages: Sequence[Page], cfg: RunConfig) -> List:
    stage = SampleStage()
    stage.initialize({'strategy': cfg.sampling.strategy, 'params': cfg.sampling.params(), 'strict': True})
    sampled = [stage.process(page) for page in pages]
    stage._log_statistics()
    return sampled


def _sampler_conf(ckpt: Checkpoint, cfg: RunConfig) -> Dict:
    """Strict SampleStage conf for a checkpoint: the sampler it was trained with, else the run config's."""
    sampling = dict(ckpt.metadata.get('sampling') or {})
    strategy = sampling.pop('strategy', cfg.sampling.strategy)
    if not sampling:
        sampling = cfg.sampling.params()
    if strategy != cfg.sampling.strategy:
        logger.info(f"Sampling with the checkpoint's '{strategy}' sampler (run config: '{cfg.sampling.strategy}')")
    return {'strategy': strategy, 'params': sampling, 'strict': True}


def cmd_train(cfg: RunConfig, progress: bool = True):
    """Train on the configured training corpus."""
    out_dir = cfg.output_dir
    write_resolved_config(cfg, out_dir)

    source = PageSource()
    source.initialize({'path': cfg.data.train, 'format': cfg.data.format, 'level': cfg.data.level, 'strict': True})
    pages = list(source.pages())
    if not pages:
        raise EmptyDataset(f"training corpus {cfg.data.train} is empty")
    _check_categories(pages, cfg.model, 'training corpus')

    model = LayoutGraphModel(cfg.model, seed=cfg.seed)
    prepared = [model.prepare(s.page, s.graph) for s in _sample_all(pages, cfg)]

    writer = WriteStage()
    writer.initialize({'out_dir': out_dir})
    metrics_log = writer.start_log('metrics.jsonl')
    rows: List[Dict] = []
    metadata = {
        'sampling': {'strategy': cfg.sampling.strategy, **cfg.sampling.params()},
        'category_names': category_names(pages),
        'level': cfg.data.level,
    }

    def on_epoch(metrics, params, state):
        row = metrics.to_dict()
        rows.append(row)
        writer.append_log('metrics.jsonl', row)
        every = cfg.training.checkpoint_every
        if every and (metrics.epoch + 1) % every == 0:
            save_checkpoint(os.path.join(out_dir, f'ckpt_epoch{metrics.epoch + 1:03d}.p2g'), params, cfg.model,
                            state.hyperparameters(), cfg.seed, {**metadata, 'epoch': metrics.epoch + 1})

    result = train(prepared, cfg.model, cfg.training, cfg.optimizer, seed=cfg.seed,
                   params=model.params, progress=progress, on_epoch=on_epoch)

    if rows:
        writer.write_table('metrics', rows)
    save_checkpoint(os.path.join(out_dir, MODEL_FILE), result.params, cfg.model,
                    result.state.hyperparameters(), cfg.seed, {**metadata, 'epoch': cfg.training.epochs})
    logger.info(f"Training complete: {len(pages)} pages, {cfg.training.epochs} epochs, log in {metrics_log}")
    return result


def cmd_eval(cfg: RunConfig, checkpoint: Optional[str] = None, split: Optional[str] = None) -> Dict:
    """Score a checkpoint on one split: F1, P/R, mAP table and sampler recall."""
    out_dir = cfg.output_dir
    write_resolved_config(cfg, out_dir)
    split = split or cfg.eval.split
    corpus = cfg.data.train if split == 'train' else cfg.data.eval
    checkpoint = checkpoint or os.path.join(out_dir, MODEL_FILE)

    ckpt = load_checkpoint(checkpoint)
    source = PageSource()
    source.initialize({'path': corpus, 'format': cfg.data.format, 'level': cfg.data.level, 'strict': True})
    pages = list(source.pages())
    if not pages:
        raise EmptyDataset(f"evaluation corpus {corpus} is empty")
    _check_categories(pages, ckpt.model_config, 'evaluation corpus')

    names = ckpt.metadata.get('category_names') or category_names(pages)
    model = LayoutGraphModel(ckpt.model_config, ckpt.params)
    sampler = SampleStage()
    sampler.initialize(_sampler_conf(ckpt, cfg))
    infer = InferStage()
    infer.initialize({'model': model, 'strict': True})
    writer = WriteStage()
    writer.initialize({'out_dir': out_dir})

    def run(page: Page) -> PagePrediction:
        return infer.process(sampler.process(page))

    # map keeps page order, so aggregation is deterministic for any worker count
    with ThreadPoolExecutor(max_workers=cfg.eval.workers) as pool:
        predictions: List[PagePrediction] = list(pool.map(run, pages))

    for p in predictions:
        if p.node_match is None:
            raise DataError(f"page {p.page.page_id} has no gold labels to evaluate against")
        writer.process(p.to_record(names))
    writer.close()

    node = _sum_matches([p.node_match for p in predictions])
    edge = _sum_matches([p.edge_match for p in predictions])
    report = coco_map([p.instances for p in predictions], [p.gold for p in predictions])
    recall = sampler.summary()

    metrics = {
        'split': split,
        'checkpoint': checkpoint,
        'pages': len(predictions),
        'node': node.to_dict(),
        'edge': edge.to_dict(),
        'map': report.to_dict(),
        'sampler_recall': {
            'strategy': recall['strategy'],
            'group_connectivity': recall['mean_group_connectivity'],
            'link_coverage': recall['mean_link_coverage'],
        },
    }
    writer.write_json('metrics.json', metrics)
    writer.write_text('report.txt', _report_lines(metrics, names))
    writer.write_table('per_class', [
        {
            'category': c,
            'name': names[c] if c < len(names) else str(c),
            'precision': m.precision,
            'recall': m.recall,
            'f1': m.f1,
            'ap': report.per_class_ap.get(c),
        }
        for c, m in sorted(node.per_class.items())
    ])
    write_coco(export_coco(pages, [p.instances for p in predictions], names),
               os.path.join(out_dir, 'detections_coco.json'))
    infer._log_statistics()
    logger.info(f"node F1 {node.f1:.4f}, edge F1 {edge.f1:.4f}, mAP {report.map:.4f}")
    return metrics


def _report_lines(metrics: Dict, names: Sequence[str]) -> List[str]:
    node, edge, mp = metrics['node'], metrics['edge'], metrics['map']
    lines = [
        f"split\t{metrics['split']}",
        f"pages\t{metrics['pages']}",
        f"node_f1\t{node['f1']:.6f}\tprecision\t{node['precision']:.6f}\trecall\t{node['recall']:.6f}",
        f"edge_f1\t{edge['f1']:.6f}\tprecision\t{edge['precision']:.6f}\trecall\t{edge['recall']:.6f}",
        f"map\t{mp['map']:.6f}",
    ]
    for t, value in mp['per_threshold_map'].items():
        lines.append(f"map@{t}\t{value:.6f}")
    for c, ap in mp['per_class_ap'].items():
        name = names[int(c)] if int(c) < len(names) else c
        lines.append(f"ap[{name}]\t{ap:.6f}")
    recall = metrics['sampler_recall']
    lines.append(f"group_connectivity\t{recall['group_connectivity']}")
    lines.append(f"link_coverage\t{recall['link_coverage']}")
    return lines


def cmd_infer(cfg: RunConfig, checkpoint: str, page_path: str) -> List[Dict]:
    """Decode instances of each input page; writes <page_id>.json and <page_id>.svg."""
    out_dir = cfg.output_dir
    write_resolved_config(cfg, out_dir)
    ckpt = load_checkpoint(checkpoint)
    names = ckpt.metadata.get('category_names') or []
    level = ckpt.metadata.get('level', cfg.data.level)

    sampler = SampleStage()
    sampler.initialize(_sampler_conf(ckpt, cfg))
    infer = InferStage()
    infer.initialize({'model': LayoutGraphModel(ckpt.model_config, ckpt.params), 'strict': True})
    writer = WriteStage()
    writer.initialize({'out_dir': out_dir})

    records = []
    for page in _iter_pages(page_path, cfg.data.format, level, strict=True):
        prediction = infer.process(sampler.process(page))
        record = prediction.to_record(names)
        stem = _safe_name(page.page_id)
        writer.write_json(f'{stem}.json', record)
        svg = render_prediction(page, prediction.instances, prediction.output.pairs, prediction.decisions, names)
        write_svg(svg, os.path.join(out_dir, f'{stem}.svg'))
        records.append(record)
    if not records:
        raise EmptyDataset(f"no pages in {page_path}")
    return records


def cmd_gradcheck(cfg: RunConfig) -> float:
    """Finite-difference check of the model loss on a small synthetic page."""
    write_resolved_config(cfg, cfg.output_dir)
    document = synth_generate(replace(cfg.synth, pages=1), 'train')[0]
    page = truncate_page(parse_page(document), GRADCHECK_NODES)
    graph = sample_graph(page.norm_boxes(), cfg.sampling.strategy, **cfg.sampling.params())
    prepared = prepare_page(page, graph, cfg.model)
    params = init_model(cfg.model, cfg.seed)

    error = grad_check(lambda: loss(forward(prepared, cfg.model, params), prepared, cfg.model),
                       params, seed=cfg.seed)
    print(f"max relative error: {error:.3e} ({params.n_parameters()} parameters, {page.n_boxes} nodes)")
    if error >= GRADCHECK_TOLERANCE:
        raise GradientMismatch(f"max relative error {error:.3e} exceeds {GRADCHECK_TOLERANCE}")
    return error


# CLI

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='Graph-based document layout analysis')
    parser.add_argument('--log-level', default=None, help='Logging level (default: P2G_LOG_LEVEL or INFO)')
    parser.add_argument('--quiet', action='store_true', help='Only warnings and errors, no progress bar')

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', default=None, help='RunConfig JSON file')
    common.add_argument('--seed', type=int, default=None, help='Run seed')
    common.add_argument('--out', default=None, help='Output directory')

    sampling = argparse.ArgumentParser(add_help=False)
    sampling.add_argument('--strategy', choices=STRATEGIES, default=None, help='Graph sampler')
    sampling.add_argument('--k', type=int, default=None, help='Neighbors for the knn sampler')
    sampling.add_argument('--beta', type=float, default=None, help='Beta of the beta-skeleton sampler')
    sampling.add_argument('--level', choices=('word', 'entity'), default=None, help='FUNSD node level')

    sub = parser.add_subparsers(dest='command', required=True)
    sub.add_parser('synth', parents=[common], help='Generate a synthetic corpus')
    p = sub.add_parser('sample', parents=[common, sampling], help='Render a sampled graph')
    p.add_argument('page', help='Page file or corpus')
    sub.add_parser('train', parents=[common, sampling], help='Train a model')
    p = sub.add_parser('eval', parents=[common, sampling], help='Evaluate a checkpoint')
    p.add_argument('--checkpoint', default=None, help=f'Checkpoint (default: <out>/{MODEL_FILE})')
    p.add_argument('--split', choices=('train', 'eval'), default=None, help='Corpus split')
    p.add_argument('--workers', type=int, default=None, help='Worker threads')
    p = sub.add_parser('infer', parents=[common, sampling], help='Decode layout instances')
    p.add_argument('--checkpoint', required=True, help='Checkpoint file')
    p.add_argument('page', help='Page file or corpus')
    sub.add_parser('gradcheck', parents=[common, sampling], help='Finite-difference gradient check')
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level, args.quiet)

    try:
        cfg = _resolve(args)
        if args.command == 'synth':
            cmd_synth(cfg)
        elif args.command == 'sample':
            cmd_sample(cfg, args.page)
        elif args.command == 'train':
            cmd_train(cfg, progress=not args.quiet and sys.stderr.isatty())
        elif args.command == 'eval':
            cmd_eval(cfg, args.checkpoint, args.split)
        elif args.command == 'infer':
            cmd_infer(cfg, args.checkpoint, args.page)
        elif args.command == 'gradcheck':
            cmd_gradcheck(cfg)
    except P2GError as e:
        logger.error(f"{e.category} error: {e}")
        return e.exit_code
    except Exception as e:
        logger.error(f"Unexpected failure: {e}", exc_info=True)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
