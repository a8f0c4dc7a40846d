"""
Memoized incremental checking. Every node of the balanced program tree caches
its result under its structural key; after an edit only the edited nodes and
their ancestors are checked again.
"""
import logging
import pickle
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Union

from fj.config import CheckerOptions
from fj.errors import FJError, ParseError
from fj.syntax import (
    ClassDecl,
    ClassName,
    Group,
    Leaf,
    ProgramNode,
    balance,
    leaves,
    node_at,
    node_path,
    parse_decls,
)
from fj.coco.checker import CheckStats, CoVerdict, FreshVars, NodeResult, check_tree, finish_program

logger = logging.getLogger(__name__)

CACHE_VERSION = 1


class MemoTable:
    """
    Node results by structural key, plus the variable supply they were drawn
    from so reused and recomputed nodes never share class variables.
    """

    def __init__(self, options: Optional[CheckerOptions] = None):
        self.options = options or CheckerOptions.from_env()
        self.entries: dict[str, NodeResult] = {}
        self.fresh = FreshVars(self.options.fresh_seed)
        self.root: Optional[ProgramNode] = None
        self.stats = CheckStats()

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, key: str) -> bool:
        return key in self.entries

    def check(self, root: ProgramNode) -> CoVerdict:
        self.stats = CheckStats()
        result = check_tree(root, self.fresh, self.options, self.stats, self.entries)
        self.root = root
        self._retain(root)
        logger.debug(f"Checked {self.stats.recomputed} nodes, reused {self.stats.reused}")
        return finish_program(root, result, self.options)

    def _retain(self, root: ProgramNode):
        live: set[str] = set()
        stack = [root]
        while stack:
            node = stack.pop()
            live.add(node.key)
            if isinstance(node, Group):
                stack.extend(node.children)
        self.entries = {k: v for k, v in self.entries.items() if k in live}

    def save(self, path: Union[str, Path]):
        payload = {
            "version": CACHE_VERSION,
            "options": self.options,
            "next_var": self.fresh.next_id,
            "entries": self.entries,
        }
        with open(path, "wb") as f:
            pickle.dump(payload, f)
        logger.info(f"Saved {len(self.entries)} cache entries to {path}")

    @classmethod
    def load(cls, path: Union[str, Path], options: Optional[CheckerOptions] = None) -> "MemoTable":
        """Load a cache file; anything unusable gives an empty table."""
        memo = cls(options)
        path = Path(path)
        if not path.exists():
            return memo
        try:
            with open(path, "rb") as f:
                payload = pickle.load(f)
        except (OSError, EOFError, pickle.UnpicklingError, AttributeError) as e:
            logger.warning(f"Ignoring unreadable cache {path}: {e}")
            return memo
        if not isinstance(payload, dict) or payload.get("version") != CACHE_VERSION:
            logger.warning(f"Ignoring cache {path}: version {payload.get('version') if isinstance(payload, dict) else '?'} != {CACHE_VERSION}")
            return memo
        if payload["options"] != memo.options:
            logger.warning(f"Ignoring cache {path}: written with different checker options")
            return memo
        memo.entries = payload["entries"]
        memo.fresh = FreshVars(max(payload["next_var"], memo.options.fresh_seed))
        logger.info(f"Loaded {len(memo.entries)} cache entries from {path}")
        return memo


def _as_root(program: Union[ProgramNode, list[ClassDecl]]) -> ProgramNode:
    return program if isinstance(program, (Group, Leaf)) else balance(list(program))


def initial_check(program: Union[ProgramNode, list[ClassDecl]],
                  options: Optional[CheckerOptions] = None) -> tuple[CoVerdict, MemoTable]:
    memo = MemoTable(options)
    verdict = memo.check(_as_root(program))
    return verdict, memo


def recheck(memo: MemoTable, program: Union[ProgramNode, list[ClassDecl]]) -> tuple[CoVerdict, MemoTable]:
    """Check program again, reusing every cached node whose key is unchanged."""
    verdict = memo.check(_as_root(program))
    return verdict, memo


def invalidate(memo: MemoTable, path: tuple[int, ...]) -> MemoTable:
    """
    Drop the cached results of the node at path and of all its ancestors.

    Raises:
        IndexError: path does not address a node of the cached program
    """
    if memo.root is None:
        raise IndexError("nothing has been checked yet")
    node_at(memo.root, path)
    node = memo.root
    memo.entries.pop(node.key, None)
    for i in path:
        node = node.children[i]
        memo.entries.pop(node.key, None)
    return memo


def invalidate_classes(memo: MemoTable, names: Iterable[ClassName]) -> MemoTable:
    for name in names:
        path = node_path(memo.root, name)
        if path is None:
            raise IndexError(f"no class {name} in the cached program")
        invalidate(memo, path)
    return memo


# Tree edits

def _replace_at(root: ProgramNode, path: tuple[int, ...], new: Optional[ProgramNode]) -> ProgramNode:
    """Rebuild the groups along path; new=None removes the node."""
    if not path:
        return new if new is not None else Group(())
    i, rest = path[0], path[1:]
    child = _replace_at(root.children[i], rest, new) if rest else new
    children = list(root.children)
    if child is None or (isinstance(child, Group) and not child.children and rest):
        del children[i]
    else:
        children[i] = child
    return Group(tuple(children))


def _subtree(decls: list[ClassDecl]) -> ProgramNode:
    if len(decls) == 1:
        return Leaf(decls[0])
    return balance(decls)


def replace_class(root: ProgramNode, name: ClassName, decls: list[ClassDecl]) -> ProgramNode:
    path = node_path(root, name)
    if path is None:
        raise FJError(f"no class {name} to replace")
    if not decls:
        return delete_class(root, name)
    return _replace_at(root, path, _subtree(decls))


def delete_class(root: ProgramNode, name: ClassName) -> ProgramNode:
    path = node_path(root, name)
    if path is None:
        raise FJError(f"no class {name} to delete")
    result = _replace_at(root, path, None)
    return result if isinstance(result, Group) else Group((result,))


def insert_classes(root: ProgramNode, decls: list[ClassDecl]) -> ProgramNode:
    """New classes become a sibling of the last leaf, leaving the rest of the tree intact."""
    if not decls:
        return root
    new = _subtree(decls)
    last = None
    for last in leaves(root):
        pass
    if last is None:
        return Group((new,))
    path = node_path(root, last.decl.name)
    return _replace_at(root, path, Group((last, new)))


# Edit scripts

@dataclass(frozen=True)
class Edit:
    op: str
    class_name: Optional[ClassName] = None
    file: Optional[Path] = None
    line: int = 0

    def __str__(self):
        return " ".join(str(x) for x in (self.op, self.class_name, self.file) if x is not None)


def parse_edit_script(text: str, base_dir: Union[str, Path] = ".") -> list[Edit]:
    """
    Parse `replace <class> <file>`, `delete <class>` and `insert <file>` lines.
    Blank lines and `#` comments are ignored; files are relative to base_dir.
    """
    base = Path(base_dir)
    edits: list[Edit] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        op = parts[0]
        if op == "replace" and len(parts) == 3:
            edits.append(Edit(op, parts[1], base / parts[2], lineno))
        elif op == "delete" and len(parts) == 2:
            edits.append(Edit(op, parts[1], None, lineno))
        elif op == "insert" and len(parts) == 2:
            edits.append(Edit(op, None, base / parts[1], lineno))
        else:
            raise ParseError(f"bad edit directive: {line}", lineno, 1)
    return edits


def apply_edit(root: ProgramNode, edit: Edit) -> ProgramNode:
    decls = parse_decls(edit.file.read_text()) if edit.file is not None else []
    if edit.op == "replace":
        return replace_class(root, edit.class_name, decls)
    if edit.op == "delete":
        return delete_class(root, edit.class_name)
    if edit.op == "insert":
        return insert_classes(root, decls)
    raise FJError(f"unknown edit {edit.op}")


class Session:
    """
    An editing session: the program being edited and the memo table its
    rechecks reuse, optionally persisted in a cache file between runs.

    Args:
        program: Initial program
        options: Checker switches
        cache_path: Cache file to load at start and write by save()
    """

    def __init__(self, program: Union[ProgramNode, list[ClassDecl]], options: Optional[CheckerOptions] = None,
                 cache_path: Optional[Union[str, Path]] = None):
        self.root = _as_root(program)
        self.cache_path = Path(cache_path) if cache_path else None
        if self.cache_path is not None:
            self.memo = MemoTable.load(self.cache_path, options)
        else:
            self.memo = MemoTable(options)

    @property
    def options(self) -> CheckerOptions:
        return self.memo.options

    @property
    def recomputed(self) -> int:
        return self.memo.stats.recomputed

    @property
    def reused(self) -> int:
        return self.memo.stats.reused

    def check(self) -> CoVerdict:
        return self.memo.check(self.root)

    def apply(self, edit: Edit) -> CoVerdict:
        self.root = apply_edit(self.root, edit)
        return self.check()

    def replay(self, edits: Iterable[Edit]) -> list[tuple[Edit, CoVerdict, int]]:
        """Apply edits one at a time, rechecking after each."""
        return [(edit, self.apply(edit), self.recomputed) for edit in edits]

    def save(self):
        if self.cache_path is not None:
            self.memo.save(self.cache_path)
