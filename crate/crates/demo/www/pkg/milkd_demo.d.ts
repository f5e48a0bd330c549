/* tslint:disable */
/* eslint-disable */

export class Session {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * JSON `{bag_label, instance_labels, teacher, student}` for one test bag.
     */
    bagView(index: number): string;
    epoch(): number;
    constructor(positive_ratio: number, separation: number, seed: number, flags: string, learning_rate: number, hpm_warmup: number);
    /**
     * JSON array of metrics rows for the epochs just run.
     */
    step(epochs: number): string;
    testBagCount(): number;
    /**
     * JSON `{scores, labels}` over all test instances.
     */
    testScores(student: boolean): string;
}

/**
 * JSON `{pseudo_labels, surviving, dropped}`.
 */
export function exploreLabels(attention: Float64Array, student_scores: Float64Array, positive: boolean, threshold: number): string;

/**
 * JSON `{points: [[fpr, tpr], ...], auc}`.
 */
export function rocCurve(scores: Float64Array, labels: Uint8Array): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_session_free: (a: number, b: number) => void;
    readonly exploreLabels: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly rocCurve: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly session_bagView: (a: number, b: number) => [number, number, number, number];
    readonly session_epoch: (a: number) => number;
    readonly session_new: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number];
    readonly session_step: (a: number, b: number) => [number, number, number, number];
    readonly session_testBagCount: (a: number) => number;
    readonly session_testScores: (a: number, b: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
