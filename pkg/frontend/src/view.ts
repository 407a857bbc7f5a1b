import type { QueueController } from './controller';

function el(tag: string, className?: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function fmt(value: number): string {
  return value.toFixed(4);
}

/** Render the whole app into #app from controller state; re-run after actions. */
export function render(root: HTMLElement, controller: QueueController, actions: ViewActions): void {
  root.replaceChildren();

  if (controller.connectionError) {
    const banner = el('div', 'banner error');
    banner.append(el('span', '', `service unreachable: ${controller.connectionError}`));
    const retry = el('button', '', 'retry') as HTMLButtonElement;
    retry.onclick = actions.retry;
    banner.append(retry);
    root.append(banner);
  }
  if (controller.lastConfirmation) {
    root.append(el('div', 'banner ok', controller.lastConfirmation));
  }

  const layout = el('div', 'layout');
  layout.append(renderQueue(controller, actions));
  layout.append(renderDetail(controller, actions));
  root.append(layout);
}

export interface ViewActions {
  retry: () => void;
  open: (itemId: string) => void;
  page: (page: number) => void;
  filterReason: (reason: string | undefined) => void;
  verdict: (kind: 'accept' | 'reject') => void;
  correct: (label: string) => void;
  setAnnotation: (text: string) => void;
}

function renderQueue(controller: QueueController, actions: ViewActions): HTMLElement {
  const panel = el('section', 'queue');
  const header = el('div', 'queue-header');
  header.append(el('h2', '', `Review queue (${controller.total} pending)`));

  const filter = el('select') as HTMLSelectElement;
  filter.append(new Option('all reasons', ''));
  for (const [reason, count] of Object.entries(controller.countsByReason)) {
    filter.append(new Option(`${reason} (${count})`, reason));
  }
  filter.value = controller.filters.reason ?? '';
  filter.onchange = () => actions.filterReason(filter.value || undefined);
  header.append(filter);
  panel.append(header);

  if (controller.isEmpty) {
    panel.append(el('p', 'empty', 'Queue is empty. Nothing awaits review.'));
    return panel;
  }

  const list = el('ul', 'items');
  controller.items.forEach((item, index) => {
    const row = el('li', index === controller.selectedIndex ? 'item selected' : 'item');
    row.append(el('code', '', item.item_id));
    row.append(el('span', `reason ${item.reason}`, item.reason));
    row.append(el('span', 'score', `c=${fmt(item.c)}`));
    row.append(el('span', 'judge', item.judge_label));
    row.onclick = () => actions.open(item.item_id);
    list.append(row);
  });
  panel.append(list);

  const pager = el('div', 'pager');
  const prev = el('button', '', 'prev') as HTMLButtonElement;
  prev.disabled = controller.page <= 1;
  prev.onclick = () => actions.page(controller.page - 1);
  const next = el('button', '', 'next') as HTMLButtonElement;
  next.disabled = controller.page >= controller.totalPages;
  next.onclick = () => actions.page(controller.page + 1);
  pager.append(prev, el('span', '', `page ${controller.page} / ${controller.totalPages}`), next);
  panel.append(pager);
  return panel;
}

function renderDetail(controller: QueueController, actions: ViewActions): HTMLElement {
  const panel = el('section', 'detail');
  const detail = controller.detail;
  if (!detail) {
    panel.append(el('p', 'empty', 'Select an item (j/k to move, Enter to open).'));
    return panel;
  }
  panel.append(el('h2', '', detail.item_id));
  panel.append(el('p', 'meta',
    `round ${detail.round} | reason ${detail.reason} | status ${detail.status}`));

  const convo = el('pre', 'conversation');
  convo.textContent = detail.record.prompt_text;
  panel.append(el('h3', '', 'Dialogue and options'));
  panel.append(convo);

  panel.append(el('h3', '', 'Model output'));
  const output = el('pre', 'output');
  output.textContent = detail.record.raw_output || '(empty output)';
  panel.append(output);
  panel.append(el('p', 'meta',
    `parsed label: ${detail.record.parsed_label ?? 'none'} | valid: ${detail.record.valid}`));

  panel.append(el('h3', '', 'Evaluator evidence'));
  const report = detail.report;
  panel.append(el('p', 'numbers',
    `p_gen=${fmt(report.p_gen)} p_disc=${fmt(report.p_disc)} alpha=${report.alpha} c=${fmt(report.c)}`));
  panel.append(el('p', 'meta',
    `judge: ${report.judge.label} (prompt ${report.judge.prompt_version}) — ${report.judge.rationale}`));

  panel.append(el('h3', '', 'Verdict'));
  if (detail.verdict) {
    panel.append(el('p', 'meta',
      `resolved: ${detail.verdict.kind}${detail.verdict.new_label ? ` -> ${detail.verdict.new_label}` : ''} by ${detail.verdict.annotator}`));
  }
  const controls = el('div', 'controls');
  const accept = el('button', 'accept', 'accept (a)') as HTMLButtonElement;
  const reject = el('button', 'reject', 'reject (r)') as HTMLButtonElement;
  accept.disabled = reject.disabled = !controller.verdictEnabled;
  accept.onclick = () => actions.verdict('accept');
  reject.onclick = () => actions.verdict('reject');
  controls.append(accept, reject);
  for (const label of controller.optionLabels()) {
    if (label === detail.record.parsed_label) continue;
    const fix = el('button', 'correct', `correct -> ${label}`) as HTMLButtonElement;
    fix.disabled = !controller.verdictEnabled;
    fix.onclick = () => actions.correct(label);
    controls.append(fix);
  }
  panel.append(controls);

  const annotation = el('textarea', 'annotation') as HTMLTextAreaElement;
  annotation.placeholder =
    'optional criterion annotation (feeds the next judge-prompt revision)';
  annotation.oninput = () => actions.setAnnotation(annotation.value);
  panel.append(annotation);
  return panel;
}
