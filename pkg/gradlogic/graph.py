# gradlogic/graph.py

from collections.abc import Mapping, Sequence

import numpy as np

from .errors import ContractError
from .ops import add
from .tensor import Tensor, constant


def topological_order(root: Tensor) -> list[Tensor]:
    """root 에 도달하는 requires_grad 노드들을 부모가 먼저 오도록 나열 (반복 DFS)."""
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def grad(root: Tensor, wrt: Sequence[Tensor], create_graph: bool = False) -> list[Tensor]:
    """
    root (스칼라) 의 wrt 각각에 대한 reverse-mode gradient.

    - create_graph=True: vjp 들이 원래 그래프 위에서 다시 기록되므로 결과 gradient 를
      또 미분할 수 있다 (2차 meta-gradient 용).
    - root 에 도달하지 않는 wrt 는 0 gradient 를 받는다.
    - 그래프의 forward 값은 건드리지 않으므로 같은 그래프로 몇 번을 불러도 결과가 같다.
    """
    if root.size != 1:
        raise ContractError(f"backward root 는 스칼라여야 함: shape={root.shape}")
    wrt = list(wrt)

    adjoint = {id(root): constant(np.ones_like(root.data))}
    if root.requires_grad:
        for node in reversed(topological_order(root)):
            g = adjoint.get(id(node))
            if g is None or node.vjp is None:
                continue
            if create_graph:
                parent_grads = node.vjp(g, node, *node.parents)
            else:
                parent_grads = node.vjp(g.detach(), node.detach(), *[p.detach() for p in node.parents])
            for parent, pg in zip(node.parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                prev = adjoint.get(id(parent))
                adjoint[id(parent)] = pg if prev is None else add(prev, pg)

    result = []
    for target in wrt:
        g = adjoint.get(id(target))
        if g is None:
            g = constant(np.zeros_like(target.data))
        elif not create_graph:
            g = g.detach()
        result.append(g)
    return result


def backward(root: Tensor, wrt: Mapping[str, Tensor], create_graph: bool = False) -> dict[str, Tensor]:
    """이름 → gradient 의 GradMap. key 는 wrt 의 key 와 정확히 같다."""
    names = list(wrt.keys())
    grads = grad(root, [wrt[name] for name in names], create_graph=create_graph)
    return dict(zip(names, grads))
