import { NodeStatus, TreeNode } from './types.js';

// Task-tree text arrives in canonical form:
//   1 Reconnaissance - [completed]
//     1.1 Web Information Gathering - (completed)
//     - result bullet attached to the node above
// Depth comes from the id, bullets attach to the preceding node, "..."
// marks elided subtrees. The engine is the source of truth; anything
// unrecognized is kept visible as a bullet rather than dropped.

const NODE_RE = /^(\s*)(\d+(?:\.\d+)*) (.*) - [[(](to-do|in-progress|completed|failed)[\])]$/;

export function parseTree(text: string): TreeNode[] {
  const nodes: TreeNode[] = [];
  for (const line of text.split('\n')) {
    if (!line.trim()) continue;
    const m = NODE_RE.exec(line);
    if (m) {
      nodes.push({
        id: m[2],
        title: m[3],
        status: m[4] as NodeStatus,
        depth: m[2].split('.').length,
        resultLines: [],
      });
      continue;
    }
    const last = nodes[nodes.length - 1];
    const bullet = line.trim();
    if (last && bullet.startsWith('- ')) {
      last.resultLines.push(bullet.slice(2));
    } else if (last && bullet === '...') {
      last.resultLines.push('(subtree elided)');
    }
  }
  return nodes;
}

export function allCompleted(nodes: TreeNode[]): boolean {
  return nodes.length > 0 && nodes.every((n) => n.status === 'completed');
}
