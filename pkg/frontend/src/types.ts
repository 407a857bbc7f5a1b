// Shapes mirror docs/service-api.md exactly; the console never invents fields.

export type RoutingReason =
  | 'high_agree'
  | 'low_agree'
  | 'evaluator_disagreement'
  | 'uncertainty_band'
  | 'judge_uncertain'
  | 'score_jump';

export type VerdictKind = 'accept' | 'reject' | 'correct';

export interface QueueItemSummary {
  item_id: string;
  state: string;
  reason: string;
  round: number;
  status: 'pending' | 'resolved';
  c: number;
  judge_label: 'correct' | 'incorrect' | 'uncertain';
}

export interface QueueResponse {
  items: QueueItemSummary[];
  total: number;
  page: number;
  page_size: number;
  counts_by_reason: Record<string, number>;
}

export interface GenerationRecordView {
  prompt_text: string;
  raw_output: string;
  parsed_cot: string;
  parsed_label: string | null;
  valid: boolean;
  state: string;
  options: [string, string, string][]; // [label, agent_query, target_state]
  timed_out: boolean;
}

export interface ConfidenceReportView {
  p_gen: number;
  p_disc: number;
  alpha: number;
  c: number;
  judge: { label: string; rationale: string; prompt_version: string };
  routing: { kind: string; reason: string };
}

export interface ReviewItemDetail {
  item_id: string;
  record: GenerationRecordView;
  report: ConfidenceReportView;
  reason: string;
  round: number;
  status: 'pending' | 'resolved';
  verdict: {
    item_id: string;
    kind: VerdictKind;
    new_label: string | null;
    annotator: string;
    annotation: string | null;
    timestamp: number | null;
  } | null;
}

export interface VerdictRequest {
  item_id: string;
  kind: VerdictKind;
  new_label?: string;
  annotator?: string;
  annotation?: string;
}

export interface QueueFilters {
  status?: 'pending' | 'resolved' | 'all';
  reason?: string;
  round?: number;
}
