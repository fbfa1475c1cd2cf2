/* tslint:disable */
/* eslint-disable */

/**
 * Summary of one attack on the selected image.
 */
export class AttackReport {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    adversarial_fs: number;
    adversarial_prediction: number;
    background_norm: number;
    clean_fs: number;
    clean_prediction: number;
    foreground_norm: number;
    label: number;
}

export class Lab {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * RGBA of the last adversarial image (the clean image if none).
     */
    adversarial_rgba(): Uint8Array;
    /**
     * Dual-perturbation attack on the selected image using its object mask
     * (or the fixation mask when `use_fixation`).
     */
    attack(eps_fg: number, eps_bg: number, lambda: number, steps: number, linf: boolean, use_fixation: boolean, seed: number): AttackReport;
    class_name(k: number): string;
    epochs_done(): number;
    image_rgba(): Uint8Array;
    label(): number;
    /**
     * IoU between the fixation mask and the object mask of the selected image.
     */
    mask_iou(): number;
    masks_rgba(): Uint8Array;
    /**
     * Generate `samples` synthetic images (three quarters for training)
     * and an untrained classifier.
     */
    constructor(seed: number, samples: number);
    perturbation_rgba(): Uint8Array;
    predict(): number;
    salience_rgba(): Uint8Array;
    /**
     * Select a test image; clears the last adversarial example.
     */
    select(index: number): void;
    selected(): number;
    size(): number;
    /**
     * Accuracy on the held-out images.
     */
    test_accuracy(): number;
    test_len(): number;
    /**
     * Run `count` Adam minibatches; returns the mean loss.
     */
    train_batches(count: number): number;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_attackreport_free: (a: number, b: number) => void;
    readonly __wbg_get_attackreport_adversarial_fs: (a: number) => number;
    readonly __wbg_get_attackreport_adversarial_prediction: (a: number) => number;
    readonly __wbg_get_attackreport_background_norm: (a: number) => number;
    readonly __wbg_get_attackreport_clean_fs: (a: number) => number;
    readonly __wbg_get_attackreport_clean_prediction: (a: number) => number;
    readonly __wbg_get_attackreport_foreground_norm: (a: number) => number;
    readonly __wbg_get_attackreport_label: (a: number) => number;
    readonly __wbg_lab_free: (a: number, b: number) => void;
    readonly __wbg_set_attackreport_adversarial_fs: (a: number, b: number) => void;
    readonly __wbg_set_attackreport_adversarial_prediction: (a: number, b: number) => void;
    readonly __wbg_set_attackreport_background_norm: (a: number, b: number) => void;
    readonly __wbg_set_attackreport_clean_fs: (a: number, b: number) => void;
    readonly __wbg_set_attackreport_clean_prediction: (a: number, b: number) => void;
    readonly __wbg_set_attackreport_foreground_norm: (a: number, b: number) => void;
    readonly __wbg_set_attackreport_label: (a: number, b: number) => void;
    readonly lab_adversarial_rgba: (a: number) => [number, number];
    readonly lab_attack: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number];
    readonly lab_class_name: (a: number, b: number) => [number, number];
    readonly lab_epochs_done: (a: number) => number;
    readonly lab_image_rgba: (a: number) => [number, number];
    readonly lab_label: (a: number) => number;
    readonly lab_mask_iou: (a: number) => [number, number, number];
    readonly lab_masks_rgba: (a: number) => [number, number, number, number];
    readonly lab_new: (a: number, b: number) => [number, number, number];
    readonly lab_perturbation_rgba: (a: number) => [number, number, number, number];
    readonly lab_predict: (a: number) => [number, number, number];
    readonly lab_salience_rgba: (a: number) => [number, number, number, number];
    readonly lab_select: (a: number, b: number) => void;
    readonly lab_selected: (a: number) => number;
    readonly lab_size: (a: number) => number;
    readonly lab_test_accuracy: (a: number) => [number, number, number];
    readonly lab_test_len: (a: number) => number;
    readonly lab_train_batches: (a: number, b: number) => [number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_table_dealloc: (a: number) => void;
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
