"""Lexical prefix tree over pronunciations."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..core import Lexicon, PhonemeInventory


@dataclass
class TreeNode:
    id: int
    label: int          # inventory index of the phoneme on the arc into this node; -1 at root
    parent: int
    depth: int
    children: dict[int, int] = field(default_factory=dict)
    words: list[str] = field(default_factory=list)

    @property
    def is_word_end(self) -> bool:
        return bool(self.words)


@dataclass
class PrefixTree:
    nodes: list[TreeNode]

    @property
    def root(self) -> TreeNode:
        return self.nodes[0]

    def __len__(self) -> int:
        return len(self.nodes)

    def find(self, labels: list[int]) -> TreeNode | None:
        node = self.root
        for lab in labels:
            nid = node.children.get(lab)
            if nid is None:
                return None
            node = self.nodes[nid]
        return node


def build_prefix_tree(lex: Lexicon, inv: PhonemeInventory) -> PrefixTree:
    if len(lex) == 0:
        raise ValueError("cannot build a prefix tree from an empty lexicon")
    nodes = [TreeNode(0, -1, -1, 0)]
    for word, pron in lex.entries.items():
        node = nodes[0]
        for sym in pron:
            lab = inv.index(sym)
            nid = node.children.get(lab)
            if nid is None:
                nid = len(nodes)
                nodes.append(TreeNode(nid, lab, node.id, node.depth + 1))
                node.children[lab] = nid
            node = nodes[nid]
        node.words.append(word)
    return PrefixTree(nodes)
