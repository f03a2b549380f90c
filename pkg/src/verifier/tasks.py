"""
Celery tasks for the per-instance and per-grid-point work of a run.

Without a broker the application runs eagerly in-process; with
VERIFIER_BROKER_URL set the same tasks run on a worker fleet. Task arguments
and results are JSON-native so they survive the json serializer.
"""

import logging
from fractions import Fraction
from typing import Dict, List, Optional

import mpmath
from celery import Celery

from src.core.enumeration import count_occupations
from src.core.models import CouplingSequence, ModelParams, validate_couplings
from src.core.numeric import log_abs, to_mpf
from src.dissection.chunks import ChunkBuilder, ChunkEvaluator, ChunkKind, split_T, term_count
from src.partition.evaluator import PartitionEvaluator
from src.settings import settings

celery_app = Celery(
    'verifier',
    broker=settings.broker_url or 'memory://',
    backend=settings.result_backend or 'cache+memory://',
)

celery_app.conf.update(
    task_serializer='json',
    accept_content=['json'],
    result_serializer='json',
    timezone='UTC',
    enable_utc=True,
    task_always_eager=settings.eager,
    task_eager_propagates=True,
)

logger = logging.getLogger(__name__)


def params_from_dict(document: Dict) -> ModelParams:
    return ModelParams(N=document['N'], p=document['p'], r=document['r'],
                       imax=document['imax'], eps=document['eps'])


def couplings_from_dict(document: Dict, r) -> CouplingSequence:
    return validate_couplings(document, r)


def _log_per_N(value, N: int, prec: Optional[int] = None) -> Dict:
    ln, sign = log_abs(value, prec)
    return {'log': ln, 'log_per_N': None if ln is None else float(ln / N), 'sign': sign}


def _nesting(tree) -> Dict[str, bool]:
    caps_monotone = all(
        all(b <= a for a, b in zip(chunk.caps, chunk.caps[1:])) for chunk in tree
    )
    boxes_nested = all(
        all(chunk.box_limits[i] <= limit for i, limit in chunk.residual_limits.items())
        for chunk in tree if chunk.kind is ChunkKind.BOXED
    )
    return {'caps_monotone': caps_monotone, 'boxes_nested': boxes_nested}


@celery_app.task(name='verifier.partition_instance')
def partition_instance(params: Dict, couplings: Dict, precision_bits: Optional[int] = None,
                       node_cap: Optional[int] = None, term_cap: Optional[int] = None,
                       with_rows: bool = False) -> Dict:
    """Sum every chunk of one instance and compare with Z in exact arithmetic."""
    instance = params_from_dict(params)
    sequence = couplings_from_dict(couplings, instance.r)
    try:
        tree = ChunkBuilder(instance, sequence, node_cap=node_cap).build()
        evaluator = ChunkEvaluator(instance, sequence, precision_bits)
        values = [evaluator.value(chunk) for chunk in tree]
        total = sum(values, Fraction(0))

        partition = PartitionEvaluator(instance, sequence, term_cap=term_cap, precision_bits=precision_bits)
        Z = partition.eval_Z('series').value
        Z_enumerated = partition.eval_Z('enumerate').value
        terms = count_occupations(instance.indices, instance.budget)
        chunk_terms = sum(term_count(chunk) for chunk in tree)
    except Exception as e:
        logger.error(f"Partition check failed for N={instance.N}, p={instance.p}, imax={instance.imax}: {e}")
        raise

    gap = total - Z
    split = split_T(tree.chunks, values)
    result = {
        'params': instance.to_dict(),
        'couplings': sequence.to_dict(),
        'chunks': len(tree),
        'depth': tree.depth(),
        'Z': str(Z),
        'chunk_sum': str(total),
        'gap': str(gap),
        'enumeration_agrees': Z_enumerated == Z,
        'term_count': terms,
        'chunk_term_count': chunk_terms,
        'T_counts': split.chunk_counts,
        **_nesting(tree),
    }
    result['passed'] = (
        gap == 0 and result['enumeration_agrees'] and terms == chunk_terms
        and result['caps_monotone'] and result['boxes_nested']
    )
    if with_rows:
        result['rows'] = [{**chunk.to_dict(), 'value': str(value), 'term_count': term_count(chunk)}
                          for chunk, value in zip(tree, values)]
    logger.debug(f"instance N={instance.N} p={instance.p} imax={instance.imax}: "
                 f"{len(tree)} chunks, gap {gap}")
    return result


@celery_app.task(name='verifier.limit_point')
def limit_point(params: Dict, couplings: Dict, target: str = '0', precision_bits: Optional[int] = None,
                node_cap: Optional[int] = None, with_split: bool = True) -> Dict:
    """(ln Z)/N, (ln Z*)/N, the gap to the target and the T-split logs at one grid point."""
    instance = params_from_dict(params)
    sequence = couplings_from_dict(couplings, instance.r)
    N = instance.N
    prec = precision_bits or settings.precision_bits
    try:
        evaluator = PartitionEvaluator(instance, sequence, precision_bits=prec)
        Z = evaluator.eval_Z().value
        Zstar = evaluator.eval_Zstar().value
        logged = _log_per_N(Z, N, prec)
        result = {
            'N': N,
            'imax': instance.imax,
            'budget': instance.budget,
            'ln_Z_per_N': logged['log_per_N'],
            'Z_sign': logged['sign'],
            'ln_Zstar_per_N': _log_per_N(Zstar, N, prec)['log_per_N'],
            'gap': None,
        }
        if logged['log'] is not None and logged['sign'] > 0:
            with mpmath.workprec(prec):
                result['gap'] = float(abs(logged['log'] / N - to_mpf(Fraction(target), prec)))
        if with_split:
            tree = ChunkBuilder(instance, sequence, node_cap=node_cap).build()
            chunk_evaluator = ChunkEvaluator(instance, sequence, prec)
            split = split_T(tree.chunks, [chunk_evaluator.value(chunk) for chunk in tree])
            result['split_exact'] = split.total == Z
            result['T_counts'] = split.chunk_counts
            for name in ('T1', 'T2', 'T3'):
                logged = _log_per_N(getattr(split, name), N, prec)
                result[f'ln_{name}_per_N'] = logged['log_per_N']
                result[f'{name}_sign'] = logged['sign']
    except Exception as e:
        logger.error(f"Limit point failed at N={N}, p={instance.p}, imax={instance.imax}: {e}")
        raise

    logger.debug(f"limit point N={N}: ln Z/N={result['ln_Z_per_N']}, gap {result['gap']}")
    return result


def dispatch(task, calls: List[Dict]) -> List[Dict]:
    """Submit every call, then collect the results in submission order."""
    pending = [task.apply_async(kwargs=kwargs) for kwargs in calls]
    return [result.get() for result in pending]
